#include "skatepose/tas_eval.hpp"

#include "skatepose/error.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace skatepose {

std::vector<ActionLabel> EvalConfig::default_excluded() {
    std::vector<ActionLabel> out;
    for (JumpType t : kJumpTypes) out.push_back(ActionLabel::entry(t));
    out.push_back(ActionLabel::landing());
    out.push_back(ActionLabel::none());
    return out;
}

bool EvalConfig::is_excluded(const ActionLabel& label) const {
    return std::find(excluded.begin(), excluded.end(), label) != excluded.end();
}

void EvalConfig::validate() const {
    if (thresholds.empty()) fail(ErrorKind::Config, "at least one F1 threshold is required");
    for (double k : thresholds) {
        if (!(k > 0.0 && k <= 100.0)) fail(ErrorKind::Config, "F1 thresholds must lie in (0, 100]");
    }
}

namespace {

void check_pair(const LabeledTimeline& pred, const LabeledTimeline& gt) {
    if (pred.size() != gt.size()) {
        fail(ErrorKind::Validation, "video '" + gt.video_id + "': prediction has " + std::to_string(pred.size()) +
                                        " frames, ground truth " + std::to_string(gt.size()));
    }
    if (pred.level != gt.level) fail(ErrorKind::Validation, "video '" + gt.video_id + "': schema levels differ");
}

struct FrameCounts {
    std::size_t evaluable = 0;
    std::size_t correct = 0;
};

FrameCounts count_frames(const LabeledTimeline& pred, const LabeledTimeline& gt, const EvalConfig& cfg) {
    check_pair(pred, gt);
    FrameCounts c;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (cfg.is_excluded(gt.labels[i])) continue;
        ++c.evaluable;
        c.correct += pred.labels[i] == gt.labels[i] ? 1 : 0;
    }
    return c;
}

double percent(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double frame_accuracy(const LabeledTimeline& pred, const LabeledTimeline& gt, const EvalConfig& cfg) {
    const auto c = count_frames(pred, gt, cfg);
    if (c.evaluable == 0) fail(ErrorKind::UndefinedMetric, "video '" + gt.video_id + "' has no evaluable frames");
    return percent(c.correct, c.evaluable);
}

double segment_overlap(const Segment& pred, const Segment& gt, OverlapMode mode) {
    const std::size_t lo = std::max(pred.start, gt.start);
    const std::size_t hi = std::min(pred.end, gt.end);
    const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
    if (mode == OverlapMode::GroundTruthFraction) return inter / static_cast<double>(gt.length());
    const double uni = static_cast<double>(pred.length() + gt.length()) - inter;
    return inter / uni;
}

SegmentCounts match_segments(const std::vector<Segment>& pred, const std::vector<Segment>& gt, double k,
                             const EvalConfig& cfg, std::vector<std::pair<std::size_t, std::size_t>>* pairs) {
    std::vector<std::size_t> p_idx, g_idx;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!cfg.is_excluded(pred[i].label)) p_idx.push_back(i);
    }
    for (std::size_t j = 0; j < gt.size(); ++j) {
        if (!cfg.is_excluded(gt[j].label)) g_idx.push_back(j);
    }
    // Both sides are correctly rounded quotients, so a ratio equal to k/100
    // compares equal.
    const double frac = k / 100.0;
    std::vector<std::vector<std::size_t>> adj(p_idx.size());
    for (std::size_t a = 0; a < p_idx.size(); ++a) {
        const Segment& p = pred[p_idx[a]];
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t b = 0; b < g_idx.size(); ++b) {
            const Segment& g = gt[g_idx[b]];
            if (!(p.label == g.label)) continue;
            const double ov = segment_overlap(p, g, cfg.overlap);
            if (ov > 0.0 && ov >= frac) cand.emplace_back(ov, b);
        }
        std::stable_sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
        for (const auto& c : cand) adj[a].push_back(c.second);
    }

    // Kuhn's augmenting paths: maximum-cardinality bipartite matching.
    std::vector<std::ptrdiff_t> owner(g_idx.size(), -1);
    std::vector<char> seen;
    const auto augment = [&](auto&& self, std::size_t a) -> bool {
        for (std::size_t b : adj[a]) {
            if (seen[b]) continue;
            seen[b] = 1;
            if (owner[b] < 0 || self(self, static_cast<std::size_t>(owner[b]))) {
                owner[b] = static_cast<std::ptrdiff_t>(a);
                return true;
            }
        }
        return false;
    };
    std::size_t tp = 0;
    for (std::size_t a = 0; a < p_idx.size(); ++a) {
        seen.assign(g_idx.size(), 0);
        if (augment(augment, a)) ++tp;
    }
    if (pairs) {
        pairs->clear();
        for (std::size_t b = 0; b < g_idx.size(); ++b) {
            if (owner[b] >= 0) pairs->emplace_back(p_idx[static_cast<std::size_t>(owner[b])], g_idx[b]);
        }
        std::sort(pairs->begin(), pairs->end());
    }
    return {tp, p_idx.size() - tp, g_idx.size() - tp};
}

F1Score score_counts(double k, const SegmentCounts& c) {
    F1Score s;
    s.threshold = k;
    s.counts = c;
    const double p = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double r = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    s.precision = 100.0 * p;
    s.recall = 100.0 * r;
    s.f1 = p + r == 0.0 ? 0.0 : 100.0 * 2.0 * p * r / (p + r);
    return s;
}

namespace {

F1Score score_video(const LabeledTimeline& pred, const LabeledTimeline& gt, double k, const EvalConfig& cfg) {
    const auto ps = segments_from_frames(pred);
    const auto gs = segments_from_frames(gt);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    F1Score s = score_counts(k, match_segments(ps, gs, k, cfg, &pairs));
    for (const auto& [i, j] : pairs) s.matches.push_back({gt.video_id, ps[i], gs[j], segment_overlap(ps[i], gs[j], cfg.overlap)});
    return s;
}

}  // namespace

F1Score f1_at_k(const LabeledTimeline& pred, const LabeledTimeline& gt, double k, const EvalConfig& cfg) {
    if (!(k > 0.0 && k <= 100.0)) fail(ErrorKind::Config, "F1 threshold must lie in (0, 100]");
    if (count_frames(pred, gt, cfg).evaluable == 0) {
        fail(ErrorKind::UndefinedMetric, "video '" + gt.video_id + "' has no evaluable frames");
    }
    return score_video(pred, gt, k, cfg);
}

EvalReport evaluate(const LabeledTimeline& pred, const LabeledTimeline& gt, const EvalConfig& cfg) {
    return evaluate(std::vector<LabeledTimeline>{pred}, std::vector<LabeledTimeline>{gt}, cfg);
}

EvalReport evaluate(const std::vector<LabeledTimeline>& preds, const std::vector<LabeledTimeline>& gts,
                    const EvalConfig& cfg) {
    cfg.validate();
    if (preds.size() != gts.size()) fail(ErrorKind::Validation, "prediction and ground-truth video counts differ");
    if (gts.empty()) fail(ErrorKind::UndefinedMetric, "no videos to evaluate");
    EvalReport report;
    report.videos = gts.size();
    std::vector<FrameCounts> frames;
    for (std::size_t v = 0; v < gts.size(); ++v) {
        frames.push_back(count_frames(preds[v], gts[v], cfg));
        report.evaluable_frames += frames.back().evaluable;
        report.correct_frames += frames.back().correct;
    }
    if (report.evaluable_frames == 0) fail(ErrorKind::UndefinedMetric, "no evaluable frames in any video");

    if (cfg.aggregation == Aggregation::Pool) {
        report.frame_accuracy = percent(report.correct_frames, report.evaluable_frames);
    } else {
        double sum = 0.0;
        for (const auto& f : frames) {
            if (f.evaluable == 0) fail(ErrorKind::UndefinedMetric, "per-video averaging needs evaluable frames in every video");
            sum += percent(f.correct, f.evaluable);
        }
        report.frame_accuracy = sum / static_cast<double>(frames.size());
    }

    for (double k : cfg.thresholds) {
        SegmentCounts pooled;
        std::vector<SegmentMatch> matches;
        double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
        for (std::size_t v = 0; v < gts.size(); ++v) {
            F1Score s = score_video(preds[v], gts[v], k, cfg);
            pooled += s.counts;
            p_sum += s.precision;
            r_sum += s.recall;
            f_sum += s.f1;
            matches.insert(matches.end(), s.matches.begin(), s.matches.end());
        }
        F1Score total = score_counts(k, pooled);
        if (cfg.aggregation == Aggregation::MeanPerVideo) {
            const double n = static_cast<double>(gts.size());
            total.precision = p_sum / n;
            total.recall = r_sum / n;
            total.f1 = f_sum / n;
        }
        total.matches = std::move(matches);
        report.scores.push_back(std::move(total));
    }
    return report;
}

nlohmann::json report_to_json(const EvalReport& report, bool include_matches) {
    nlohmann::json j;
    j["frame_accuracy"] = report.frame_accuracy;
    j["evaluable_frames"] = report.evaluable_frames;
    j["correct_frames"] = report.correct_frames;
    j["videos"] = report.videos;
    j["f1"] = nlohmann::json::array();
    for (const auto& s : report.scores) {
        nlohmann::json e{{"k", s.threshold}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                         {"tp", s.counts.tp}, {"fp", s.counts.fp}, {"fn", s.counts.fn}};
        if (include_matches) {
            e["matches"] = nlohmann::json::array();
            for (const auto& m : s.matches) {
                e["matches"].push_back({{"video_id", m.video_id},
                                        {"label", to_string(m.gt.label)},
                                        {"pred", {m.pred.start, m.pred.end}},
                                        {"gt", {m.gt.start, m.gt.end}},
                                        {"overlap", m.overlap}});
            }
        }
        j["f1"].push_back(std::move(e));
    }
    return j;
}

std::string format_report_table(const EvalReport& report) {
    std::string out;
    char line[128];
    std::snprintf(line, sizeof line, "videos %zu, evaluable frames %zu\n", report.videos, report.evaluable_frames);
    out += line;
    std::snprintf(line, sizeof line, "frame accuracy  %6.2f\n", report.frame_accuracy);
    out += line;
    out += "   k  precision  recall      F1   tp   fp   fn\n";
    for (const auto& s : report.scores) {
        std::snprintf(line, sizeof line, "%4g  %9.2f  %6.2f  %6.2f  %3zu  %3zu  %3zu\n", s.threshold, s.precision, s.recall,
                      s.f1, s.counts.tp, s.counts.fp, s.counts.fn);
        out += line;
    }
    return out;
}

}  // namespace skatepose
