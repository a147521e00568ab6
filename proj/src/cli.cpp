#include "skatepose/cli.hpp"

#include "skatepose/checkpoint.hpp"
#include "skatepose/dataset.hpp"
#include "skatepose/error.hpp"
#include "skatepose/geometry.hpp"
#include "skatepose/gradcheck.hpp"
#include "skatepose/kernels.hpp"
#include "skatepose/parallel.hpp"
#include "skatepose/pose_io.hpp"
#include "skatepose/rng.hpp"
#include "skatepose/skeleton.hpp"
#include "skatepose/synth.hpp"
#include "skatepose/tas_eval.hpp"
#include "skatepose/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

namespace skatepose::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kManifestVersion = 1;
constexpr const char* kManifestName = "manifest.json";

// Seed tags for per-item randomness owned by the CLI.
constexpr std::uint64_t kPreprocessTag = 0x9e9c;
constexpr std::uint64_t kSpecCameraTag = 0x5bec;
constexpr std::uint64_t kHeldoutTag = 0x4e1d;

struct Invocation {
    std::string command;
    json config = json::object();                // config file contents with flags applied
    std::map<std::string, std::string> inputs;  // role -> path
    fs::path out_dir;
    std::vector<std::string> argv;
    std::string rerun_of;
};

struct RunRecord {
    json resolved = json::object();
    std::map<std::string, fs::path> outputs;
    json metrics = json::object();
    bool passed = true;
    std::string failure;
};

// ---- config helpers -------------------------------------------------------

void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) fail(ErrorKind::Config, where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
            fail(ErrorKind::Config, "unknown key '" + key + "' in " + where);
        }
    }
}

template <class T>
void read_key(const json& j, const char* key, T& field, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(field);
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, where + "." + key + ": " + e.what());
    }
}

const json* section(const json& cfg, const char* name) {
    const auto it = cfg.find(name);
    return it == cfg.end() ? nullptr : &*it;
}

std::uint64_t resolved_seed(const json& cfg) {
    std::uint64_t seed = 0;
    read_key(cfg, "seed", seed, "config");
    return seed;
}

std::size_t resolved_threads(const json& cfg) {
    std::size_t threads = 1;
    read_key(cfg, "threads", threads, "config");
    if (threads == 0) fail(ErrorKind::Config, "threads must be at least 1");
    return threads;
}

json ransac_json(const RansacConfig& r) {
    return {{"iterations", r.iterations}, {"inlier_threshold", r.inlier_threshold},
            {"contact_fraction", r.contact_fraction}};
}

RansacConfig ransac_from(const json* j) {
    RansacConfig r;
    if (!j) return r;
    check_keys(*j, {"iterations", "inlier_threshold", "contact_fraction"}, "ransac");
    read_key(*j, "iterations", r.iterations, "ransac");
    read_key(*j, "inlier_threshold", r.inlier_threshold, "ransac");
    read_key(*j, "contact_fraction", r.contact_fraction, "ransac");
    r.validate();
    return r;
}

json gradcheck_json(const GradientSuiteConfig& g) {
    return {{"batch", g.batch},         {"joints", g.joints},         {"d_pose", g.d_pose},
            {"d_view", g.d_view},       {"hidden", g.hidden},         {"frames", g.frames},
            {"gru_hidden", g.gru_hidden}, {"fc_hidden", g.fc_hidden}, {"classes", g.classes},
            {"step", g.step},           {"tolerance", g.tolerance},   {"abs_floor", g.abs_floor}};
}

GradientSuiteConfig gradcheck_from(const json* j) {
    GradientSuiteConfig g;
    if (!j) return g;
    check_keys(*j,
               {"batch", "joints", "d_pose", "d_view", "hidden", "frames", "gru_hidden", "fc_hidden", "classes", "step",
                "tolerance", "abs_floor"},
               "gradcheck");
    const std::string w = "gradcheck";
    read_key(*j, "batch", g.batch, w);
    read_key(*j, "joints", g.joints, w);
    read_key(*j, "d_pose", g.d_pose, w);
    read_key(*j, "d_view", g.d_view, w);
    read_key(*j, "hidden", g.hidden, w);
    read_key(*j, "frames", g.frames, w);
    read_key(*j, "gru_hidden", g.gru_hidden, w);
    read_key(*j, "fc_hidden", g.fc_hidden, w);
    read_key(*j, "classes", g.classes, w);
    read_key(*j, "step", g.step, w);
    read_key(*j, "tolerance", g.tolerance, w);
    read_key(*j, "abs_floor", g.abs_floor, w);
    return g;
}

OverlapMode parse_overlap(const std::string& s) {
    if (s == "iou") return OverlapMode::IntersectionOverUnion;
    if (s == "gt_fraction") return OverlapMode::GroundTruthFraction;
    fail(ErrorKind::Config, "overlap must be 'iou' or 'gt_fraction', got '" + s + "'");
}

std::string overlap_name(OverlapMode m) { return m == OverlapMode::IntersectionOverUnion ? "iou" : "gt_fraction"; }

Aggregation parse_aggregation(const std::string& s) {
    if (s == "pool") return Aggregation::Pool;
    if (s == "mean") return Aggregation::MeanPerVideo;
    fail(ErrorKind::Config, "aggregation must be 'pool' or 'mean', got '" + s + "'");
}

std::string aggregation_name(Aggregation a) { return a == Aggregation::Pool ? "pool" : "mean"; }

struct EvalSettings {
    SchemaLevel level = SchemaLevel::Set;
    EvalConfig config;
};

EvalSettings eval_from(const json* j) {
    EvalSettings s;
    if (j) {
        check_keys(*j, {"level", "thresholds", "overlap", "aggregation"}, "evaluate");
        std::string level = "set", overlap = "iou", aggregation = "pool";
        read_key(*j, "level", level, "evaluate");
        read_key(*j, "overlap", overlap, "evaluate");
        read_key(*j, "aggregation", aggregation, "evaluate");
        read_key(*j, "thresholds", s.config.thresholds, "evaluate");
        s.level = parse_schema_level(level);
        s.config.overlap = parse_overlap(overlap);
        s.config.aggregation = parse_aggregation(aggregation);
    }
    s.config.validate();
    return s;
}

json eval_json(const EvalSettings& s) {
    return {{"level", std::string(to_string(s.level))},
            {"thresholds", s.config.thresholds},
            {"overlap", overlap_name(s.config.overlap)},
            {"aggregation", aggregation_name(s.config.aggregation)}};
}

SynthConfig synth_from(const json* j) {
    json merged = SynthConfig{};
    if (j) {
        check_keys(*j,
                   {"classes", "n_per_class", "test_fraction", "frames", "pool_size", "style_spread",
                    "pool_style_spread", "restore_heading", "noise", "ransac", "seed"},
                   "synth");
        merged.merge_patch(*j);
    }
    SynthConfig c;
    try {
        c = merged.get<SynthConfig>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("synth: ") + e.what());
    }
    return c;
}

// ---- file helpers ---------------------------------------------------------

const std::string& required_input(const Invocation& inv, const std::string& role) {
    const auto it = inv.inputs.find(role);
    if (it == inv.inputs.end() || it->second.empty()) fail(ErrorKind::Usage, "missing required input --" + role);
    return it->second;
}

std::optional<std::string> optional_input(const Invocation& inv, const std::string& role) {
    const auto it = inv.inputs.find(role);
    if (it == inv.inputs.end() || it->second.empty()) return std::nullopt;
    return it->second;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
    return out;
}

void write_json_file(const fs::path& path, const json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

std::vector<CanonicalPose> flatten_poses(const std::vector<CanonicalSequence>& seqs) {
    std::vector<CanonicalPose> poses;
    for (const auto& s : seqs) poses.insert(poses.end(), s.poses.begin(), s.poses.end());
    return poses;
}

// ---- subcommands ----------------------------------------------------------

RunRecord cmd_preprocess(Invocation& inv, std::ostream& out) {
    RunRecord rec;
    const std::uint64_t seed = resolved_seed(inv.config);
    const RansacConfig ransac = ransac_from(section(inv.config, "ransac"));
    rec.resolved["ransac"] = ransac_json(ransac);

    const fs::path input = required_input(inv, "input");
    const auto seqs = load_pose_dataset(input, pose_format_for(input));
    std::optional<KeypointMap> map;
    if (const auto m = optional_input(inv, "map")) map = load_keypoint_map(*m);

    std::vector<CanonicalSequence> canon;
    canon.reserve(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        PoseSequence3D seq = seqs[i];
        if (seq.skeleton->name != canonical17()->name) {
            if (!map) {
                if (seq.skeleton->name != capture83()->name) {
                    fail(ErrorKind::Validation,
                         "no keypoint map for skeleton '" + seq.skeleton->name + "'; pass --map");
                }
                inv.inputs["map"] = fs::absolute(default_capture83_map_path()).lexically_normal().string();
                map = load_keypoint_map(default_capture83_map_path());
            }
            if (map->source->name != seq.skeleton->name) {
                fail(ErrorKind::Validation, "keypoint map source '" + map->source->name + "' does not match skeleton '" +
                                                seq.skeleton->name + "'");
            }
            seq = remap_keypoints(seq, *map);
        }
        RansacConfig rc = ransac;
        rc.seed = derive_seed(seed, kPreprocessTag, i);
        canon.push_back(canonicalize_sequence(seq, rc));
    }
    const fs::path path = inv.out_dir / "canonical.jsonl";
    save_canonical_jsonl(path, canon);
    rec.outputs["canonical"] = path;
    rec.metrics = {{"sequences", canon.size()}, {"poses", flatten_poses(canon).size()}};
    out << "preprocess: " << canon.size() << " sequences -> " << path.string() << '\n';
    return rec;
}

RunRecord cmd_synth(Invocation& inv, std::ostream& out) {
    RunRecord rec;
    SynthConfig cfg = synth_from(section(inv.config, "synth"));
    cfg.seed = resolved_seed(inv.config);
    cfg.validate();
    json resolved = cfg;
    resolved.erase("seed");
    resolved["ransac"].erase("seed");
    rec.resolved["synth"] = resolved;

    if (const auto spec_path = optional_input(inv, "spec")) {
        // Hand-written motions: raw 3D plus one seeded random view of each.
        const json specs = read_json_file(*spec_path);
        if (!specs.is_array() || specs.empty()) fail(ErrorKind::Validation, "spec file must be a non-empty JSON array");
        std::vector<PoseSequence3D> motions;
        LabeledSequenceDataset rendered;
        std::size_t max_class = 0;
        for (std::size_t i = 0; i < specs.size(); ++i) {
            MotionSpec spec;
            try {
                spec = specs[i].get<MotionSpec>();
            } catch (const json::exception& e) {
                fail(ErrorKind::Validation, "spec " + std::to_string(i) + ": " + e.what());
            }
            spec.validate();
            GeneratedMotion m = generate_motion(spec);
            const std::string id = "spec" + std::to_string(i);
            m.sequence.trial = id;
            Rng rng(derive_seed(cfg.seed, kSpecCameraTag, i));
            RansacConfig rc = cfg.ransac;
            rc.seed = rng.next_u64();
            const auto canon = canonicalize_sequence(m.sequence, rc);
            rendered.items.push_back(
                render_sequence(canon, sample_virtual_camera(rng), id, spec.class_id, cfg.restore_heading));
            max_class = std::max(max_class, spec.class_id);
            motions.push_back(std::move(m.sequence));
        }
        for (std::size_t c = 0; c <= max_class; ++c) rendered.class_names.push_back(synth_class_name(c));
        rec.outputs["motions"] = inv.out_dir / "motions.jsonl";
        rec.outputs["sequences"] = inv.out_dir / "sequences.jsonl";
        save_pose_dataset(rec.outputs["motions"], motions, PoseFormat::Jsonl);
        save_labeled_jsonl(rec.outputs["sequences"], rendered);
        rec.metrics = {{"motions", motions.size()}};
        out << "synth: " << motions.size() << " motions from spec file\n";
        return rec;
    }

    const SynthDataset data = generate_dataset(cfg);
    CanonicalSequence pool;
    pool.skeleton = canonical17();
    pool.poses = data.pool;
    pool.trial = "pool";
    rec.outputs["train"] = inv.out_dir / "train.jsonl";
    rec.outputs["test"] = inv.out_dir / "test.jsonl";
    rec.outputs["motions"] = inv.out_dir / "motions.jsonl";
    rec.outputs["pool"] = inv.out_dir / "pool.jsonl";
    save_labeled_jsonl(rec.outputs["train"], data.train);
    save_labeled_jsonl(rec.outputs["test"], data.test);
    save_pose_dataset(rec.outputs["motions"], data.motions, PoseFormat::Jsonl);
    save_canonical_jsonl(rec.outputs["pool"], {pool});
    rec.metrics = {{"train_sequences", data.train.items.size()},
                   {"test_sequences", data.test.items.size()},
                   {"motions", data.motions.size()},
                   {"pool_poses", data.pool.size()}};
    out << "synth: " << data.train.items.size() << " train, " << data.test.items.size() << " test sequences, "
        << data.pool.size() << " pool poses\n";
    return rec;
}

RunRecord cmd_pretrain(Invocation& inv, std::ostream& out) {
    RunRecord rec;
    PretrainConfig cfg;
    if (const json* j = section(inv.config, "pretrain")) apply_json(*j, cfg);
    cfg.seed = resolved_seed(inv.config);
    cfg.threads = resolved_threads(inv.config);
    const auto poses = flatten_poses(load_canonical_jsonl(required_input(inv, "poses")));
    if (poses.empty()) fail(ErrorKind::InsufficientData, "no poses in the input file");
    cfg.encoder.input_dim = 2 * poses.front().coords.rows();
    cfg.validate();
    json resolved = to_json(cfg);
    resolved.erase("seed");
    resolved.erase("threads");
    rec.resolved["pretrain"] = resolved;

    const PretrainResult result = pretrain_encoder(
        poses, cfg, nullptr, [&](std::size_t epoch, double mean_loss, double probe, const EncoderParams&) {
            out << "epoch " << epoch + 1 << "/" << cfg.epochs << " loss " << mean_loss << " probe " << probe << '\n';
        });

    rec.outputs["checkpoint"] = inv.out_dir / "encoder.ckpt";
    rec.outputs["loss_csv"] = inv.out_dir / "loss.csv";
    save_checkpoint(rec.outputs["checkpoint"], make_checkpoint(result.encoder));
    {
        auto csv = open_output(rec.outputs["loss_csv"]);
        write_loss_history_csv(csv, result.history);
    }
    rec.metrics["steps"] = result.history.size();
    rec.metrics["probe_per_epoch"] = result.probe;
    if (!result.history.empty()) rec.metrics["final_total_loss"] = result.history.back().total;
    if (const auto heldout = optional_input(inv, "heldout")) {
        const auto held = flatten_poses(load_canonical_jsonl(*heldout));
        const auto report = evaluate_view_invariance(result.encoder, held, derive_seed(cfg.seed, kHeldoutTag));
        rec.metrics["view_invariance"] = {{"poses", report.poses},
                                          {"top1_retrieval", report.top1_retrieval},
                                          {"top1_retrieval_cosine", report.top1_retrieval_cosine},
                                          {"same_pose_cosine", report.same_pose_cosine},
                                          {"different_pose_cosine", report.different_pose_cosine},
                                          {"probe", report.probe}};
        out << "held-out top-1 retrieval " << report.top1_retrieval << " probe " << report.probe << '\n';
    }
    return rec;
}

RunRecord cmd_embed(Invocation& inv, std::ostream& out) {
    RunRecord rec;
    const std::size_t threads = resolved_threads(inv.config);
    const EncoderParams enc = encoder_from_checkpoint(load_checkpoint(required_input(inv, "checkpoint")));
    const LabeledSequenceDataset data = load_labeled_jsonl(required_input(inv, "sequences"));
    std::vector<Tensor> z(data.items.size());
    parallel_for(data.items.size(), threads,
                 [&](std::size_t i) { z[i] = embed_sequence(enc, data.items[i].frames); });

    rec.outputs["embeddings"] = inv.out_dir / "embeddings.jsonl";
    auto file = open_output(rec.outputs["embeddings"]);
    const std::size_t d_pose = enc.config().d_pose;
    for (std::size_t i = 0; i < z.size(); ++i) {
        json rows = json::array();
        for (std::size_t t = 0; t < z[i].rows(); ++t) {
            json row = json::array();
            for (std::size_t k = 0; k < z[i].cols(); ++k) row.push_back(z[i](t, k));
            rows.push_back(std::move(row));
        }
        file << json{{"id", data.items[i].id}, {"label", data.items[i].label}, {"d_pose", d_pose}, {"z", rows}}.dump()
             << '\n';
    }
    rec.metrics = {{"sequences", z.size()}, {"embedding_dim", enc.embedding_dim()}, {"d_pose", d_pose}};
    out << "embed: " << z.size() << " sequences\n";
    return rec;
}

RunRecord cmd_finetune(Invocation& inv, std::ostream& out) {
    RunRecord rec;
    FinetuneConfig cfg;
    if (const json* j = section(inv.config, "finetune")) apply_json(*j, cfg);
    cfg.seed = resolved_seed(inv.config);
    cfg.threads = resolved_threads(inv.config);
    cfg.validate();
    json resolved = to_json(cfg);
    resolved.erase("seed");
    resolved.erase("threads");
    rec.resolved["finetune"] = resolved;

    std::optional<EncoderParams> pretrained;
    if (const auto ckpt = optional_input(inv, "checkpoint")) pretrained = encoder_from_checkpoint(load_checkpoint(*ckpt));
    const LabeledSequenceDataset train = load_labeled_jsonl(required_input(inv, "train"));
    std::optional<LabeledSequenceDataset> test;
    if (const auto t = optional_input(inv, "test")) test = load_labeled_jsonl(*t, train.num_classes());

    const FinetuneResult result =
        finetune_classifier(pretrained ? &*pretrained : nullptr, train, cfg, test ? &*test : nullptr);

    rec.outputs["checkpoint"] = inv.out_dir / "model.ckpt";
    rec.outputs["accuracy_csv"] = inv.out_dir / "accuracy.csv";
    save_checkpoint(rec.outputs["checkpoint"], make_checkpoint(result.encoder, &result.classifier));
    {
        auto csv = open_output(rec.outputs["accuracy_csv"]);
        write_accuracy_csv(csv, result.history);
    }
    rec.metrics["init"] = pretrained ? "pretrained" : "scratch";
    rec.metrics["subset_size"] = result.subset.size();
    rec.metrics["warnings"] = result.warnings;
    if (!result.history.empty()) rec.metrics["final_train_accuracy"] = result.history.back().train_accuracy;
    if (test) {
        const auto pred = predict_all(result.encoder, result.classifier, *test, cfg.threads);
        std::size_t correct = 0;
        rec.outputs["predictions"] = inv.out_dir / "predictions.jsonl";
        auto file = open_output(rec.outputs["predictions"]);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            correct += pred[i] == test->items[i].label;
            file << json{{"id", test->items[i].id}, {"label", test->items[i].label}, {"predicted", pred[i]}}.dump()
                 << '\n';
        }
        const double acc = pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
        rec.metrics["test_accuracy"] = acc;
        out << "finetune: test accuracy " << acc << " (" << result.subset.size() << " training sequences)\n";
    }
    for (const auto& w : result.warnings) out << "warning: " << w << '\n';
    return rec;
}

// A file, or a directory of files paired with the other side by file name.
std::vector<fs::path> label_files(const fs::path& path) {
    if (!fs::is_directory(path)) return {path};
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorKind::InsufficientData, "no label files in '" + path.string() + "'");
    return files;
}

RunRecord cmd_evaluate(Invocation& inv, std::ostream& out) {
    RunRecord rec;
    const EvalSettings settings = eval_from(section(inv.config, "evaluate"));
    rec.resolved["evaluate"] = eval_json(settings);

    const fs::path pred_path = required_input(inv, "pred");
    const fs::path gt_path = required_input(inv, "gt");
    if (fs::is_directory(pred_path) != fs::is_directory(gt_path)) {
        fail(ErrorKind::Usage, "--pred and --gt must both be files or both be directories");
    }
    std::vector<LabeledTimeline> preds, gts;
    for (const auto& gt_file : label_files(gt_path)) {
        const fs::path pred_file = fs::is_directory(pred_path) ? pred_path / gt_file.filename() : pred_path;
        if (!fs::exists(pred_file)) {
            fail(ErrorKind::Validation, "no prediction for '" + gt_file.filename().string() + "'");
        }
        gts.push_back(load_frame_labels(gt_file, settings.level));
        preds.push_back(load_frame_labels(pred_file, settings.level));
    }
    const EvalReport report = evaluate(preds, gts, settings.config);
    rec.outputs["report"] = inv.out_dir / "report.json";
    write_json_file(rec.outputs["report"], report_to_json(report));
    rec.metrics = report_to_json(report, false);
    out << format_report_table(report);
    return rec;
}

RunRecord cmd_gradcheck(Invocation& inv, std::ostream& out) {
    RunRecord rec;
    GradientSuiteConfig cfg = gradcheck_from(section(inv.config, "gradcheck"));
    cfg.seed = resolved_seed(inv.config);
    rec.resolved["gradcheck"] = gradcheck_json(cfg);
    const GradientSuiteReport report = run_gradient_suite(cfg);
    rec.outputs["report"] = inv.out_dir / "gradcheck.json";
    write_json_file(rec.outputs["report"], to_json(report));
    for (const auto& c : report.checks) {
        out << (c.report.passed ? "PASS " : "FAIL ") << c.name << " max relative error " << c.report.max_relative_error
            << '\n';
    }
    rec.metrics = {{"max_relative_error", report.max_relative_error}, {"passed", report.passed}};
    rec.passed = report.passed;
    if (!report.passed) rec.failure = "gradient check exceeded tolerance " + std::to_string(cfg.tolerance);
    return rec;
}

// ---- execution and manifest ----------------------------------------------

using Command = RunRecord (*)(Invocation&, std::ostream&);

const std::map<std::string, Command>& commands() {
    static const std::map<std::string, Command> table{
        {"preprocess", cmd_preprocess}, {"synth", cmd_synth},       {"pretrain", cmd_pretrain},
        {"embed", cmd_embed},           {"finetune", cmd_finetune}, {"evaluate", cmd_evaluate},
        {"gradcheck", cmd_gradcheck},
    };
    return table;
}

const std::vector<std::string> kTopLevelKeys{"seed", "threads", "ransac", "synth", "pretrain",
                                              "finetune", "evaluate", "gradcheck"};

int execute(Invocation& inv, std::ostream& out, std::ostream& err) {
    if (!inv.config.is_object()) fail(ErrorKind::Config, "config must be a JSON object");
    for (const auto& [key, value] : inv.config.items()) {
        if (std::find(kTopLevelKeys.begin(), kTopLevelKeys.end(), key) == kTopLevelKeys.end()) {
            fail(ErrorKind::Config, "unknown config section '" + key + "'");
        }
    }
    const auto cmd = commands().find(inv.command);
    if (cmd == commands().end()) fail(ErrorKind::Usage, "unknown command '" + inv.command + "'");
    for (auto& [role, path] : inv.inputs) {
        if (path.empty()) continue;
        if (!fs::exists(path)) fail(ErrorKind::Io, "input --" + role + " '" + path + "' does not exist");
        path = fs::absolute(path).lexically_normal().string();
    }
    fs::create_directories(inv.out_dir);

    const auto start = std::chrono::steady_clock::now();
    RunRecord rec = cmd->second(inv, out);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    json config = rec.resolved;
    config["seed"] = resolved_seed(inv.config);
    config["threads"] = resolved_threads(inv.config);
    json inputs = json::object(), outputs = json::object(), checksums = {{"inputs", json::object()},
                                                                         {"outputs", json::object()}};
    for (const auto& [role, path] : inv.inputs) {
        if (path.empty()) continue;
        inputs[role] = path;
        if (fs::is_regular_file(path)) {
            checksums["inputs"][role] = sha256_file(path);
        } else {
            json dir = json::object();
            for (const auto& f : label_files(path)) dir[f.filename().string()] = sha256_file(f);
            checksums["inputs"][role] = dir;
        }
    }
    for (const auto& [role, path] : rec.outputs) {
        const fs::path abs = fs::absolute(path).lexically_normal();
        outputs[role] = abs.string();
        checksums["outputs"][role] = sha256_file(abs);
    }
    json manifest = {{"manifest_version", kManifestVersion},
                     {"command", inv.command},
                     {"config", config},
                     {"seed", config["seed"]},
                     {"threads", config["threads"]},
                     {"inputs", inputs},
                     {"outputs", outputs},
                     {"checksums", checksums},
                     {"metrics", rec.metrics},
                     {"passed", rec.passed},
                     {"kernel_backend", std::string(kernels::to_string(kernels::active_backend()))},
                     {"duration_seconds", seconds},
                     {"argv", inv.argv}};
    if (!inv.rerun_of.empty()) manifest["rerun_of"] = inv.rerun_of;
    write_json_file(inv.out_dir / kManifestName, manifest);
    if (!rec.passed) {
        err << "error: " << rec.failure << '\n';
        return kExitFailure;
    }
    return kExitOk;
}

Invocation invocation_from_manifest(const fs::path& path) {
    const json m = read_json_file(path);
    if (!m.is_object() || !m.contains("command") || !m.contains("config")) {
        fail(ErrorKind::Validation, "'" + path.string() + "' is not a run manifest");
    }
    Invocation inv;
    inv.command = m.at("command").get<std::string>();
    inv.config = m.at("config");
    if (m.contains("inputs")) {
        for (const auto& [role, p] : m.at("inputs").items()) inv.inputs[role] = p.get<std::string>();
    }
    // Inputs must be the same bytes the original run read.
    if (m.contains("checksums") && m.at("checksums").contains("inputs")) {
        for (const auto& [role, sum] : m.at("checksums").at("inputs").items()) {
            const std::string& p = inv.inputs[role];
            if (!fs::exists(p)) fail(ErrorKind::Io, "manifest input '" + p + "' no longer exists");
            json now;
            if (fs::is_regular_file(p)) {
                now = sha256_file(p);
            } else {
                now = json::object();
                for (const auto& f : label_files(p)) now[f.filename().string()] = sha256_file(f);
            }
            if (now != sum) fail(ErrorKind::Validation, "input --" + role + " '" + p + "' changed since the manifest");
        }
    }
    inv.rerun_of = fs::absolute(path).lexically_normal().string();
    return inv;
}

// ---- argument parsing -----------------------------------------------------

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string config;
    std::string out;
};

void add_common(CLI::App* sub, CommonFlags& c) {
    sub->add_option("--seed", c.seed, "Seed for every stochastic step (default 0)");
    sub->add_option("--threads", c.threads, "Worker threads; 1 gives bit-identical reruns (default 1)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--config", c.config, "JSON config file; flags override it")->check(CLI::ExistingFile);
    sub->add_option("--out", c.out, "Output directory (receives manifest.json)")->required();
}

json& at_path(json& j, std::initializer_list<const char*> keys) {
    json* cur = &j;
    for (const char* k : keys) cur = &(*cur)[k];
    return *cur;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for hashing");
    const std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) fail(ErrorKind::State, "SHA-256 unavailable");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pose representation learning and action segmentation tools", "skatepose"};
    app.require_subcommand(1);

    CommonFlags common;
    std::map<std::string, std::string> inputs;
    json flags = json::object();
    const auto input = [&](CLI::App* sub, const std::string& role, const std::string& help, bool required) {
        auto* opt = sub->add_option("--" + role, inputs[role], help)->check(CLI::ExistingPath);
        if (required) opt->required();
        return opt;
    };

    std::optional<std::size_t> epochs, batch_size, ransac_iters, classes, per_class, pool_size, frames;
    std::optional<double> lr, fraction, inlier_threshold, test_fraction;
    std::optional<std::string> level, overlap, aggregation;
    std::vector<double> thresholds;
    bool scratch = false, freeze = false;

    auto* pre = app.add_subcommand("preprocess", "Pose sequences (JSONL or CSV) -> canonical JSONL");
    add_common(pre, common);
    input(pre, "input", "3D pose dataset", true);
    input(pre, "map", "Keypoint map for non-canonical skeletons", false);
    pre->add_option("--ransac-iterations", ransac_iters, "RANSAC iterations");
    pre->add_option("--inlier-threshold", inlier_threshold, "RANSAC inlier threshold in meters");

    auto* syn = app.add_subcommand("synth", "Synthetic labeled sequences, raw motions and a pre-training pool");
    add_common(syn, common);
    input(syn, "spec", "JSON array of motion specs (renders only those motions)", false);
    syn->add_option("--classes", classes, "Number of classes");
    syn->add_option("--per-class", per_class, "Motions per class before the split");
    syn->add_option("--pool-size", pool_size, "Canonical poses in the pre-training pool");
    syn->add_option("--frames", frames, "Frames per motion");
    syn->add_option("--test-fraction", test_fraction, "Share of motions held out");

    auto* pt = app.add_subcommand("pretrain", "Contrastive pre-training on canonical poses");
    add_common(pt, common);
    input(pt, "poses", "Canonical JSONL; every frame is one pose", true);
    input(pt, "heldout", "Canonical JSONL for the view-invariance report", false);
    pt->add_option("--epochs", epochs, "Training epochs");
    pt->add_option("--batch-size", batch_size, "Poses per step");
    pt->add_option("--lr", lr, "Adam learning rate");

    auto* emb = app.add_subcommand("embed", "Per-frame embeddings of 2D sequences");
    add_common(emb, common);
    input(emb, "checkpoint", "Encoder checkpoint", true);
    input(emb, "sequences", "Labeled 2D sequence JSONL", true);

    auto* ft = app.add_subcommand("finetune", "Sequence classifier on top of the encoder");
    add_common(ft, common);
    input(ft, "checkpoint", "Pretrained encoder checkpoint", false);
    input(ft, "train", "Labeled 2D training sequences", true);
    input(ft, "test", "Labeled 2D held-out sequences", false);
    ft->add_flag("--scratch", scratch, "Start from a random encoder");
    ft->add_flag("--freeze", freeze, "Keep the encoder fixed");
    ft->add_option("--fraction", fraction, "Share of labeled training sequences, per class");
    ft->add_option("--epochs", epochs, "Training epochs");
    ft->add_option("--batch-size", batch_size, "Sequences per step");
    ft->add_option("--lr", lr, "Adam learning rate");

    auto* ev = app.add_subcommand("evaluate", "Frame accuracy and segmental F1 from frame-label files");
    add_common(ev, common);
    input(ev, "pred", "Predicted frame labels (file or directory)", true);
    input(ev, "gt", "Ground-truth frame labels (file or directory)", true);
    ev->add_option("--level", level, "set or element");
    ev->add_option("--overlap", overlap, "iou or gt_fraction");
    ev->add_option("--aggregation", aggregation, "pool or mean");
    ev->add_option("--thresholds", thresholds, "Overlap thresholds in percent");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
    add_common(gc, common);

    std::string manifest_path;
    std::string rerun_out;
    std::optional<std::size_t> rerun_threads;
    auto* rr = app.add_subcommand("rerun", "Repeat a run from its manifest");
    rr->add_option("manifest", manifest_path, "manifest.json of the earlier run")->required()->check(CLI::ExistingFile);
    rr->add_option("--out", rerun_out, "Output directory")->required();
    rr->add_option("--threads", rerun_threads, "Override the thread count")->check(CLI::PositiveNumber);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        Invocation inv;
        inv.argv = args;
        if (rr->parsed()) {
            inv = invocation_from_manifest(manifest_path);
            inv.argv = args;
            inv.out_dir = rerun_out;
            if (rerun_threads) inv.config["threads"] = *rerun_threads;
            return execute(inv, out, err);
        }
        CLI::App* sub = app.get_subcommands().front();
        inv.command = sub->get_name();
        inv.out_dir = common.out;
        if (!common.config.empty()) inv.config = read_json_file(common.config);
        if (!inv.config.is_object()) fail(ErrorKind::Config, "config file must hold a JSON object");
        if (common.seed) inv.config["seed"] = *common.seed;
        if (common.threads) inv.config["threads"] = *common.threads;
        for (const auto& [role, path] : inputs) {
            if (!path.empty()) inv.inputs[role] = path;
        }

        json& c = inv.config;
        if (sub == pre) {
            if (ransac_iters) at_path(c, {"ransac", "iterations"}) = *ransac_iters;
            if (inlier_threshold) at_path(c, {"ransac", "inlier_threshold"}) = *inlier_threshold;
        } else if (sub == syn) {
            if (classes) at_path(c, {"synth", "classes"}) = *classes;
            if (per_class) at_path(c, {"synth", "n_per_class"}) = *per_class;
            if (pool_size) at_path(c, {"synth", "pool_size"}) = *pool_size;
            if (frames) at_path(c, {"synth", "frames"}) = *frames;
            if (test_fraction) at_path(c, {"synth", "test_fraction"}) = *test_fraction;
        } else if (sub == pt) {
            if (epochs) at_path(c, {"pretrain", "epochs"}) = *epochs;
            if (batch_size) at_path(c, {"pretrain", "batch_size"}) = *batch_size;
            if (lr) at_path(c, {"pretrain", "optimizer", "learning_rate"}) = *lr;
        } else if (sub == ft) {
            if (scratch && inv.inputs.count("checkpoint")) fail(ErrorKind::Usage, "--scratch conflicts with --checkpoint");
            if (!scratch && !inv.inputs.count("checkpoint")) fail(ErrorKind::Usage, "pass --checkpoint or --scratch");
            if (freeze) at_path(c, {"finetune", "freeze_encoder"}) = true;
            if (fraction) at_path(c, {"finetune", "label_fraction"}) = *fraction;
            if (epochs) at_path(c, {"finetune", "epochs"}) = *epochs;
            if (batch_size) at_path(c, {"finetune", "batch_size"}) = *batch_size;
            if (lr) at_path(c, {"finetune", "optimizer", "learning_rate"}) = *lr;
        } else if (sub == ev) {
            if (level) at_path(c, {"evaluate", "level"}) = *level;
            if (overlap) at_path(c, {"evaluate", "overlap"}) = *overlap;
            if (aggregation) at_path(c, {"evaluate", "aggregation"}) = *aggregation;
            if (!thresholds.empty()) at_path(c, {"evaluate", "thresholds"}) = thresholds;
        }
        return execute(inv, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::Usage ? kExitUsage : kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

}  // namespace skatepose::cli
