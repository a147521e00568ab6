#pragma once

#include "skatepose/tas_schema.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <string>
#include <vector>

namespace skatepose {

enum class OverlapMode {
    IntersectionOverUnion,
    GroundTruthFraction,  // |pred ∩ gt| / |gt|
};

enum class Aggregation {
    Pool,          // sum TP/FP/FN (and frames) over videos, then score
    MeanPerVideo,  // score every video, then average
};

struct EvalConfig {
    std::vector<double> thresholds{10, 25, 50, 75, 90};  // percent
    std::vector<ActionLabel> excluded = default_excluded();
    OverlapMode overlap = OverlapMode::IntersectionOverUnion;
    Aggregation aggregation = Aggregation::Pool;

    // All entry labels, landing and NONE.
    static std::vector<ActionLabel> default_excluded();
    bool is_excluded(const ActionLabel& label) const;
    void validate() const;
};

struct SegmentCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    SegmentCounts& operator+=(const SegmentCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const SegmentCounts&, const SegmentCounts&) = default;
};

struct SegmentMatch {
    std::string video_id;
    Segment pred;
    Segment gt;
    double overlap = 0.0;
};

struct F1Score {
    double threshold = 0.0;  // percent
    double precision = 0.0;  // percent
    double recall = 0.0;     // percent
    double f1 = 0.0;         // percent
    SegmentCounts counts;
    std::vector<SegmentMatch> matches;
};

struct EvalReport {
    double frame_accuracy = 0.0;  // percent
    std::size_t evaluable_frames = 0;
    std::size_t correct_frames = 0;
    std::size_t videos = 0;
    std::vector<F1Score> scores;  // one per threshold, config order
};

// Percent of frames with a non-excluded ground-truth label that are predicted
// correctly. Throws Validation on length/level mismatch, UndefinedMetric when
// no frame is evaluable.
double frame_accuracy(const LabeledTimeline& pred, const LabeledTimeline& gt, const EvalConfig& cfg = {});

double segment_overlap(const Segment& pred, const Segment& gt, OverlapMode mode);

// One-to-one matching between same-label, non-excluded segments. A pair is
// eligible when its overlap is at least k/100; the matching returned has the
// largest possible number of true positives. Candidates are tried in order
// of decreasing overlap, so unambiguous cases pair up greedily.
SegmentCounts match_segments(const std::vector<Segment>& pred, const std::vector<Segment>& gt, double k,
                             const EvalConfig& cfg, std::vector<std::pair<std::size_t, std::size_t>>* pairs = nullptr);

// Precision, recall and F1 (percent) from counts; 0 where undefined.
F1Score score_counts(double k, const SegmentCounts& counts);

F1Score f1_at_k(const LabeledTimeline& pred, const LabeledTimeline& gt, double k, const EvalConfig& cfg = {});

EvalReport evaluate(const LabeledTimeline& pred, const LabeledTimeline& gt, const EvalConfig& cfg = {});
// Videos are paired by position; aggregation follows cfg.aggregation.
EvalReport evaluate(const std::vector<LabeledTimeline>& preds, const std::vector<LabeledTimeline>& gts,
                    const EvalConfig& cfg = {});

nlohmann::json report_to_json(const EvalReport& report, bool include_matches = true);
std::string format_report_table(const EvalReport& report);

}  // namespace skatepose
