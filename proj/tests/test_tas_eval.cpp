#include "support.hpp"

#include "skatepose/error.hpp"
#include "skatepose/tas_eval.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <fstream>

using namespace skatepose;
using namespace skatepose::testing;

namespace {

LabeledTimeline timeline(std::initializer_list<std::pair<ActionLabel, std::size_t>> runs) {
    LabeledTimeline t{"t", {}, SchemaLevel::Element};
    for (const auto& [l, n] : runs) t.labels.insert(t.labels.end(), n, l);
    return t;
}

const ActionLabel kJump = ActionLabel::jump(JumpType::Lutz, 3);

}  // namespace

TEST_CASE("frame accuracy examples") {
    Rng rng(1);
    const auto t = random_timeline(SchemaLevel::Element, 10, 8, rng, class_list(SchemaLevel::Element));
    auto gt = t;
    gt.labels.push_back(kJump);
    CHECK(frame_accuracy(gt, gt) == 100.0);

    const auto excluded = timeline({{ActionLabel::none(), 5}, {ActionLabel::entry(JumpType::Flip), 3}, {ActionLabel::landing(), 2}});
    CHECK_THROWS_AS(
        [&] {
            try {
                frame_accuracy(excluded, excluded);
            } catch (const Error& e) {
                CHECK(e.kind() == ErrorKind::UndefinedMetric);
                throw;
            }
        }(),
        Error);

    const auto seven = timeline({{ActionLabel::none(), 4}, {kJump, 10}});
    const auto pred = timeline({{ActionLabel::none(), 7}, {kJump, 7}});
    CHECK(frame_accuracy(pred, seven) == doctest::Approx(70.0));

    const auto shorter = timeline({{kJump, 3}});
    CHECK_THROWS_AS(frame_accuracy(shorter, seven), Error);
    auto other_level = seven;
    other_level.level = SchemaLevel::Set;
    CHECK_THROWS_AS(frame_accuracy(seven, other_level), Error);
}

TEST_CASE("IoU one third example") {
    const auto gt = timeline({{ActionLabel::none(), 10}, {kJump, 10}, {ActionLabel::none(), 10}});
    const auto pred = timeline({{ActionLabel::none(), 15}, {kJump, 10}, {ActionLabel::none(), 5}});
    CHECK(segment_overlap({15, 25, kJump}, {10, 20, kJump}, OverlapMode::IntersectionOverUnion) ==
          doctest::Approx(1.0 / 3.0));
    CHECK(segment_overlap({15, 25, kJump}, {10, 20, kJump}, OverlapMode::GroundTruthFraction) == doctest::Approx(0.5));
    for (double k : {10.0, 25.0}) {
        const auto s = f1_at_k(pred, gt, k);
        CHECK(s.counts == SegmentCounts{1, 0, 0});
        CHECK(s.f1 == 100.0);
    }
    const auto s50 = f1_at_k(pred, gt, 50);
    CHECK(s50.counts == SegmentCounts{0, 1, 1});
    CHECK(s50.f1 == 0.0);

    EvalConfig one_sided;
    one_sided.overlap = OverlapMode::GroundTruthFraction;
    CHECK(f1_at_k(pred, gt, 50, one_sided).counts == SegmentCounts{1, 0, 0});
}

TEST_CASE("greedy counterexample is solved optimally") {
    const auto pred = timeline({{kJump, 10}, {ActionLabel::none(), 1}, {kJump, 9}});
    const auto gt = timeline({{kJump, 2}, {ActionLabel::none(), 1}, {kJump, 12}, {ActionLabel::none(), 5}});
    CHECK(f1_at_k(pred, gt, 10).counts == SegmentCounts{2, 0, 0});
}

TEST_CASE("f1 matches the brute-force oracle on random pairs") {
    Rng rng(2024);
    const EvalConfig cfg;
    const auto excluded = [&](const ActionLabel& l) { return cfg.is_excluded(l); };
    for (int trial = 0; trial < 1000; ++trial) {
        const auto [pred, gt] = random_timeline_pair(rng);
        double last = 101.0;
        for (int k : {10, 25, 50, 75, 90}) {
            const auto got = f1_at_k(pred, gt, k, cfg);
            const auto want = brute_force_counts(pred, gt, k, excluded);
            const auto score = oracle_score(want);
            CHECK(got.counts == SegmentCounts{want.tp, want.fp, want.fn});
            CHECK(got.precision == score.precision);
            CHECK(got.recall == score.recall);
            CHECK(got.f1 == score.f1);
            CHECK(got.f1 <= last);
            last = got.f1;
        }
    }
}

TEST_CASE("excluded relabeling leaves segment counts unchanged") {
    Rng rng(77);
    const EvalConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
        auto [pred, gt] = random_timeline_pair(rng);
        auto relabeled = pred;
        for (auto& l : relabeled.labels) {
            if (cfg.is_excluded(l)) l = ActionLabel::entry(JumpType::Salchow);
        }
        for (int k : {10, 50, 90}) CHECK(f1_at_k(relabeled, gt, k, cfg).counts == f1_at_k(pred, gt, k, cfg).counts);
    }
}

TEST_CASE("evaluate examples") {
    const auto gt = timeline({{ActionLabel::none(), 5},
                              {ActionLabel::entry(JumpType::Lutz), 3},
                              {kJump, 4},
                              {ActionLabel::landing(), 2},
                              {ActionLabel::jump(JumpType::Axel, 2), 3}});
    const auto same = evaluate(gt, gt);
    CHECK(same.frame_accuracy == 100.0);
    REQUIRE(same.scores.size() == 5);
    for (const auto& s : same.scores) CHECK(s.f1 == 100.0);

    const auto none = timeline({{ActionLabel::none(), gt.size()}});
    const auto zero = evaluate(none, gt);
    CHECK(zero.frame_accuracy == 0.0);
    for (const auto& s : zero.scores) {
        CHECK(s.f1 == 0.0);
        CHECK(s.counts == SegmentCounts{0, 0, 2});
    }

    EvalConfig bad;
    bad.thresholds = {0.0};
    CHECK_THROWS_AS(evaluate(gt, gt, bad), Error);
    bad.thresholds = {};
    CHECK_THROWS_AS(evaluate(gt, gt, bad), Error);
}

TEST_CASE("golden fixture") {
    const std::filesystem::path root = SKATEPOSE_TEST_DATA "/segmentation";
    std::vector<LabeledTimeline> preds, gts;
    for (const char* name : {"video_a.txt", "video_b.txt", "video_c.txt"}) {
        preds.push_back(load_frame_labels(root / "pred" / name, SchemaLevel::Element));
        gts.push_back(load_frame_labels(root / "gt" / name, SchemaLevel::Element));
    }
    std::ifstream in(root / "golden_report.json");
    const auto golden = nlohmann::json::parse(in);
    const auto report = evaluate(preds, gts);
    CHECK(report.videos == golden["videos"].get<std::size_t>());
    CHECK(report.evaluable_frames == golden["evaluable_frames"].get<std::size_t>());
    CHECK(report.correct_frames == golden["correct_frames"].get<std::size_t>());
    CHECK(report.frame_accuracy == doctest::Approx(golden["frame_accuracy"].get<double>()).epsilon(1e-12));
    REQUIRE(report.scores.size() == golden["scores"].size());
    for (std::size_t i = 0; i < report.scores.size(); ++i) {
        const auto& g = golden["scores"][i];
        const auto& s = report.scores[i];
        CHECK(s.threshold == g["threshold"].get<double>());
        CHECK(s.counts == SegmentCounts{g["tp"], g["fp"], g["fn"]});
        CHECK(s.precision == doctest::Approx(g["precision"].get<double>()).epsilon(1e-12));
        CHECK(s.recall == doctest::Approx(g["recall"].get<double>()).epsilon(1e-12));
        CHECK(s.f1 == doctest::Approx(g["f1"].get<double>()).epsilon(1e-12));
        CHECK(s.f1 == doctest::Approx(2 * s.precision * s.recall / std::max(s.precision + s.recall, 1e-300)));
    }

    const auto json = report_to_json(report, false);
    CHECK(json["f1"].size() == 5);
    CHECK(format_report_table(report).find("  50      66.67   50.00   57.14") != std::string::npos);

    EvalConfig mean;
    mean.aggregation = Aggregation::MeanPerVideo;
    const auto per_video = evaluate(preds, gts, mean);
    CHECK(per_video.videos == 3);
}
