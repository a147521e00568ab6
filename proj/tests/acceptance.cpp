// Acceptance suite: one PASS/FAIL line per criterion. `--criterion N` runs a
// single criterion; exit status is 0 only when every selected one passes.
#include "support.hpp"

#include "skatepose/cli.hpp"
#include "skatepose/gradcheck.hpp"
#include "skatepose/losses.hpp"
#include "skatepose/synth.hpp"
#include "skatepose/tas_eval.hpp"
#include "skatepose/tas_schema.hpp"
#include "skatepose/train.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>

using namespace skatepose;
using namespace skatepose::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            passed = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Tensor rows(std::initializer_list<std::initializer_list<double>> r) {
    Tensor t = Tensor::matrix(r.size(), r.begin()->size());
    std::size_t i = 0;
    for (const auto& row : r) {
        std::size_t j = 0;
        for (double v : row) t(i, j++) = v;
        ++i;
    }
    return t;
}

PoseSequence3D transformed(const PoseSequence3D& seq, const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
    PoseSequence3D out = seq;
    for (auto& f : out.frames) {
        f = (f * r.transpose()).eval();
        f.rowwise() += t.transpose();
    }
    return out;
}

// ---- 1: gradients ----------------------------------------------------------

Outcome gradients() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    GradientSuiteConfig cfg;  // B = 8, N = 17, d = 12 + 4
    const auto report = run_gradient_suite(cfg);
    const double elapsed = seconds_since(t0);
    o.require(cfg.batch == 8 && cfg.joints == 17 && cfg.d_pose + cfg.d_view == 16, "instance shape");
    o.require(cfg.step == 1e-5, "step 1e-5");
    for (const auto& c : report.checks) o.require(c.report.max_relative_error < 1e-4, c.name);
    o.require(elapsed < 60.0, "runtime < 60 s");
    o.note("max rel err " + fmt("%.2e", report.max_relative_error) + ", " + fmt("%.1f s", elapsed));
    return o;
}

// ---- 2: loss analytics -----------------------------------------------------

Outcome losses() {
    Outcome o;
    const Tensor decorrelated = rows({{1, 1}, {1, -1}, {-1, 1}, {-1, -1}});
    o.require(barlow_twins_loss(decorrelated, decorrelated, 5e-3) == 0.0, "Barlow Twins = 0 on decorrelated fixture");

    Rng rng(2);
    const Tensor z = random_matrix(6, 5, rng);
    Tensor v = random_matrix(6, 3, rng);
    for (std::size_t i = 0; i < 6; ++i) {
        const double n = std::sqrt(v(i, 0) * v(i, 0) + v(i, 1) * v(i, 1) + v(i, 2) * v(i, 2));
        for (std::size_t k = 0; k < 3; ++k) v(i, k) /= n;
    }
    o.require(view_alignment_loss(z, z, v, v) <= 1e-30, "view alignment = 0 on aligned pairs");
    const Tensor ortho_a = rows({{1, 0, 0}, {0, 1, 0}}), ortho_b = rows({{0, 1, 0}, {0, 0, 1}});
    const Tensor cam_a = rows({{1, 0, 0}, {0, 0, 1}}), cam_b = rows({{0, 1, 0}, {1, 0, 0}});
    o.require(view_alignment_loss(ortho_a, ortho_b, cam_a, cam_b) == 0.0, "view alignment = 0 on orthogonal pairs");
    const Tensor same = rows({{1, 2, 3}, {-1, 0, 2}});
    o.require(std::abs(view_alignment_loss(same, same, cam_a, cam_b) - 1.0) <= 1e-15, "view alignment = 1 for cos 1 vs 0");

    o.require(variance_loss(Tensor::matrix(5, 3, 0.7), 1.0) == 1.0, "variance = 1 on a constant batch");
    o.require(std::abs(kl_uniform_loss(Tensor::matrix(4, 3, 0.0)) + std::log(2.0)) <= 1e-9, "KL = -ln 2 at s = 0.5");
    if (o.passed) o.note("6 fixtures exact");
    return o;
}

// ---- 3: geometry -----------------------------------------------------------

Outcome geometry() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();

    std::size_t good = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const Eigen::Vector3d n = Eigen::AngleAxisd(rng.uniform(0.0, 0.3), Eigen::Vector3d(rng.normal(), rng.normal(), 0).normalized()) *
                                  Eigen::Vector3d::UnitZ();
        const double offset = rng.uniform(-0.5, 0.5);
        const auto seq = plane_with_outliers(n, offset, 50, 50, rng);
        RansacConfig cfg;
        cfg.seed = seed;
        const Plane p = fit_ground_plane(seq, cfg);
        good += angle_deg(p.normal, n) <= 0.5 && std::abs(p.offset - offset) <= 1e-3;
    }
    o.require(good >= 99, "RANSAC >= 99/100 seeds");
    o.note("RANSAC " + std::to_string(good) + "/100");

    double worst_inv = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(1000 + seed);
        Rng spec_rng(seed);
        const auto m = generate_motion(sample_motion_spec(spec_rng.index(3), 32, 0.005, spec_rng));
        RansacConfig cfg;
        cfg.seed = seed;
        const auto base = canonicalize_sequence(m.sequence, cfg);
        const Eigen::Matrix3d rz = Eigen::AngleAxisd(rng.uniform(-3.14, 3.14), Eigen::Vector3d::UnitZ()).toRotationMatrix();
        const Eigen::Vector3d t(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
        const auto moved = canonicalize_sequence(transformed(m.sequence, rz, t), cfg);
        for (std::size_t i = 0; i < base.poses.size(); ++i) {
            worst_inv = std::max(worst_inv, (moved.poses[i].coords - base.poses[i].coords).cwiseAbs().maxCoeff());
        }
    }
    o.require(worst_inv <= 1e-5, "canonicalization invariance <= 1e-5");
    o.note("invariance " + fmt("%.1e", worst_inv));

    Rng rng(8);
    const Skeleton& sk = *canonical17();
    double worst_idem = 0.0;
    for (int i = 0; i < 200; ++i) {
        Frame3 f = random_frame(17, rng);
        const Frame3 once = normalize_pose(f, sk);
        worst_idem = std::max(worst_idem, (normalize_pose(once, sk) - once).cwiseAbs().maxCoeff());
        const auto a = align_facing(f, sk);
        const auto b = align_facing(a.pose, sk);
        worst_idem = std::max(worst_idem, (b.pose - a.pose).cwiseAbs().maxCoeff());
    }
    o.require(worst_idem <= 1e-9, "idempotence <= 1e-9");
    const double elapsed = seconds_since(t0);
    o.require(elapsed < 60.0, "runtime < 60 s");
    o.note("idempotence " + fmt("%.1e", worst_idem) + ", " + fmt("%.1f s", elapsed));
    return o;
}

// ---- 4: metric oracle --------------------------------------------------------

Outcome metric_oracle() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2024);
    const EvalConfig cfg;
    const auto excluded = [&](const ActionLabel& l) { return cfg.is_excluded(l); };
    std::size_t mismatches = 0, non_monotone = 0, matched = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto [pred, gt] = random_timeline_pair(rng);
        double last = 101.0;
        for (int k : {10, 25, 50, 75, 90}) {
            const auto got = f1_at_k(pred, gt, k, cfg);
            const auto want = brute_force_counts(pred, gt, k, excluded);
            const auto score = oracle_score(want);
            const bool same = got.counts == SegmentCounts{want.tp, want.fp, want.fn} && got.precision == score.precision &&
                              got.recall == score.recall && got.f1 == score.f1;
            mismatches += !same;
            non_monotone += got.f1 > last;
            matched += want.tp;
            last = got.f1;
        }
    }
    const double elapsed = seconds_since(t0);
    o.require(mismatches == 0, "exact agreement with brute force");
    o.require(non_monotone == 0, "F1 non-increasing in k");
    o.require(elapsed < 60.0, "runtime < 60 s");
    o.note(std::to_string(mismatches) + " mismatches in 5000 comparisons, " + std::to_string(matched) +
           " oracle true positives, " + fmt("%.2f s", elapsed));
    return o;
}

// ---- 5: view invariance ----------------------------------------------------

Outcome view_invariance(std::uint64_t seed) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const RansacConfig rc;
    const auto train = generate_pose_pool(2000, 3, 32, 0.005, rc, derive_seed(seed, 1));
    const auto held = generate_pose_pool(200, 3, 32, 0.005, rc, derive_seed(seed, 2));
    PretrainConfig cfg;
    cfg.seed = seed;
    const auto result = pretrain_encoder(train, cfg);
    const auto r = evaluate_view_invariance(result.encoder, held, derive_seed(seed, 3));
    const double elapsed = seconds_since(t0);
    o.require(cfg.epochs == 30, "30 epochs");
    o.require(r.top1_retrieval >= 0.5, "top-1 retrieval >= 50%");
    o.require(r.probe >= 0.3, "probe >= 0.3");
    o.require(elapsed < 600.0, "runtime < 10 min");
    o.note("top-1 " + fmt("%.3f", r.top1_retrieval) + " (cosine " + fmt("%.3f", r.top1_retrieval_cosine) + "), probe " +
           fmt("%.3f", r.probe) + ", " + fmt("%.1f s", elapsed));
    return o;
}

// ---- 6: low-label fine-tuning ----------------------------------------------

Outcome low_label(std::size_t threads) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        SynthConfig sc;
        sc.n_per_class = 400;
        sc.test_fraction = 0.25;
        sc.seed = seed;
        const auto data = generate_dataset(sc);
        PretrainConfig pc;
        pc.seed = seed;
        pc.threads = threads;
        const auto pre = pretrain_encoder(data.pool, pc);
        std::string line = "seed " + std::to_string(seed) + ":";
        for (double f : {1.0, 0.5, 0.1, 0.01}) {
            double acc[2];
            for (int arm = 0; arm < 2; ++arm) {
                FinetuneConfig fc;
                fc.seed = seed;
                fc.label_fraction = f;
                fc.gru_hidden = 32;
                fc.fc_hidden = 32;
                fc.threads = threads;
                const auto r = finetune_classifier(arm == 0 ? &pre.encoder : nullptr, data.train, fc);
                acc[arm] = 100.0 * classification_accuracy(r.encoder, r.classifier, data.test, threads);
            }
            o.require(acc[0] >= acc[1], "seed " + std::to_string(seed) + " fraction " + fmt("%g", f) + " pretrained >= scratch");
            if (f == 0.01) o.require(acc[0] - acc[1] >= 10.0, "seed " + std::to_string(seed) + " 1% gain >= 10 points");
            line += " " + fmt("%g%%", 100 * f) + " " + fmt("%.1f", acc[0]) + "/" + fmt("%.1f", acc[1]);
        }
        std::cerr << "  criterion 6 " << line << " (pretrained/scratch), " << fmt("%.0f s", seconds_since(t0)) << '\n';
        o.note(line);
    }
    const double elapsed = seconds_since(t0);
    o.require(elapsed < 1200.0, "runtime < 20 min");
    o.note(fmt("%.0f s", elapsed));
    return o;
}

// ---- 7: schema -------------------------------------------------------------

Outcome schema() {
    Outcome o;
    const auto set = build_label_schema(SchemaLevel::Set);
    const auto element = build_label_schema(SchemaLevel::Element);
    std::size_t jumps = 0;
    for (const auto& l : element) jumps += l.phase == Phase::Jump;
    o.require(set.size() == 13, "13 set labels");
    o.require(element.size() == 30, "30 element labels");
    o.require(jumps == 23, "23 element jumps");
    o.require(std::find(element.begin(), element.end(), ActionLabel::jump(JumpType::Axel, 4)) == element.end(),
              "no quad Axel");

    const auto tl = [](std::initializer_list<std::pair<ActionLabel, std::size_t>> runs) {
        LabeledTimeline t{"t", {}, SchemaLevel::Set};
        for (const auto& [l, n] : runs) t.labels.insert(t.labels.end(), n, l);
        return t;
    };
    const auto none = ActionLabel::none();
    o.require(validate_procedure(tl({{ActionLabel::entry(JumpType::Axel), 4},
                                     {ActionLabel::jump(JumpType::Axel), 3},
                                     {ActionLabel::landing(), 2},
                                     {none, 5}}))
                  .empty(),
              "clean procedure");
    const auto missing = validate_procedure(tl({{none, 3}, {ActionLabel::jump(JumpType::Lutz), 3}, {ActionLabel::landing(), 2}}));
    o.require(missing.size() == 1 && missing[0].kind == ViolationKind::MissingEntry, "missing entry");
    const auto mismatch = validate_procedure(
        tl({{ActionLabel::entry(JumpType::Flip), 3}, {ActionLabel::jump(JumpType::Lutz), 3}, {ActionLabel::landing(), 2}}));
    o.require(mismatch.size() == 1 && mismatch[0].kind == ViolationKind::EntryTypeMismatch, "entry type mismatch");

    const auto all_none = tl({{none, 10}});
    o.require(coarsen_annotation(all_none).labels == all_none.labels, "coarsen fixed point");
    const auto jump = ActionLabel::jump(JumpType::Salchow);
    const auto c = coarsen_annotation(tl({{ActionLabel::entry(JumpType::Salchow), 2}, {jump, 2}, {ActionLabel::landing(), 2}}));
    o.require(c.labels == tl({{none, 2}, {jump, 2}, {none, 2}}).labels, "coarsen entry/jump/landing");
    const auto mixed = tl({{none, 10}, {ActionLabel::entry(JumpType::Salchow), 4}, {jump, 2}, {ActionLabel::landing(), 4}});
    o.require(action_frame_fraction(mixed) == 0.5 && action_frame_fraction(coarsen_annotation(mixed)) == 0.1,
              "action fraction 50% -> 10%");
    if (o.passed) o.note("13/30/23 labels, procedure and coarsening examples exact");
    return o;
}

// ---- 8: CLI reproducibility ------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_reruns() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path root = temp_dir("acceptance_cli");
    const std::string fixture = SKATEPOSE_TEST_DATA "/segmentation";
    const auto p = [&](const std::string& s) { return (root / s).string(); };
    const std::vector<std::vector<std::string>> runs{
        {"synth", "--out", p("synth"), "--per-class", "6", "--pool-size", "200", "--frames", "16"},
        {"preprocess", "--input", p("synth/motions.jsonl"), "--out", p("preprocess")},
        {"pretrain", "--poses", p("synth/pool.jsonl"), "--heldout", p("preprocess/canonical.jsonl"), "--epochs", "3",
         "--batch-size", "32", "--out", p("pretrain")},
        {"embed", "--checkpoint", p("pretrain/encoder.ckpt"), "--sequences", p("synth/test.jsonl"), "--out", p("embed")},
        {"finetune", "--checkpoint", p("pretrain/encoder.ckpt"), "--train", p("synth/train.jsonl"), "--test",
         p("synth/test.jsonl"), "--epochs", "3", "--fraction", "0.5", "--out", p("finetune")},
        {"finetune", "--scratch", "--train", p("synth/train.jsonl"), "--test", p("synth/test.jsonl"), "--epochs", "3",
         "--out", p("scratch")},
        {"evaluate", "--level", "element", "--pred", fixture + "/pred", "--gt", fixture + "/gt", "--out", p("evaluate")},
        {"gradcheck", "--out", p("gradcheck")},
    };
    std::size_t files = 0;
    for (const auto& args : runs) {
        std::ostringstream out, err;
        std::vector<std::string> with_threads = args;
        with_threads.insert(with_threads.end(), {"--threads", "1"});
        const int code = cli::run(with_threads, out, err);
        const fs::path dir = args[std::find(args.begin(), args.end(), "--out") - args.begin() + 1];
        if (code != 0) {
            o.require(false, args[0] + " exit " + std::to_string(code) + ": " + err.str());
            continue;
        }
        const fs::path again = dir.string() + "_rerun";
        const int rerun = cli::run({"rerun", (dir / "manifest.json").string(), "--out", again.string(), "--threads", "1"},
                                   out, err);
        o.require(rerun == 0, args[0] + " rerun exit " + std::to_string(rerun) + ": " + err.str());
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().filename() == "manifest.json") continue;
            ++files;
            o.require(slurp(entry.path()) == slurp(again / entry.path().filename()),
                      args[0] + " " + entry.path().filename().string() + " bit-identical");
        }
    }
    o.note(std::to_string(runs.size()) + " commands, " + std::to_string(files) + " output files compared, " +
           fmt("%.1f s", seconds_since(t0)));
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite"};
    std::vector<int> selected;
    std::uint64_t seed = 0;
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--criterion", selected, "Run only these criteria (1-8)")->check(CLI::Range(1, 8));
    app.add_option("--seed", seed, "Seed for criterion 5");
    app.add_option("--threads", threads, "Worker threads for criterion 6")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient suite", gradients},
        {"loss analytics", losses},
        {"geometry suite", geometry},
        {"metric oracle", metric_oracle},
        {"view invariance", [&] { return view_invariance(seed); }},
        {"low-label fine-tuning", [&] { return low_label(threads); }},
        {"schema counts", schema},
        {"CLI reproducibility", cli_reruns},
    };
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        all = all && o.passed;
        std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
                  << std::endl;
    }
    return all ? 0 : 1;
}
