#pragma once

#include "skatepose/geometry.hpp"
#include "skatepose/rng.hpp"
#include "skatepose/skeleton.hpp"
#include "skatepose/tas_schema.hpp"
#include "skatepose/tensor.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <filesystem>
#include <functional>
#include <utility>
#include <string>
#include <vector>

// Hand-rolled generators shared by the unit and acceptance tests.
namespace skatepose::testing {

inline Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::matrix(rows, cols);
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

inline Eigen::Matrix3d random_rotation(Rng& rng) {
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

inline Frame3 random_frame(std::size_t joints, Rng& rng, double scale = 1.0) {
    Frame3 f(static_cast<Eigen::Index>(joints), 3);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        for (int k = 0; k < 3; ++k) f(i, k) = scale * rng.normal();
    }
    return f;
}

// Random valid timeline: alternating runs of random labels from the level's
// vocabulary, `segments` runs of length 1..max_len.
inline LabeledTimeline random_timeline(SchemaLevel level, std::size_t segments, std::size_t max_len, Rng& rng,
                                       const std::vector<ActionLabel>& vocab) {
    LabeledTimeline t{"random", {}, level};
    for (std::size_t s = 0; s < segments; ++s) {
        const ActionLabel l = vocab[rng.index(vocab.size())];
        const std::size_t len = 1 + rng.index(max_len);
        t.labels.insert(t.labels.end(), len, l);
    }
    return t;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("skatepose_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline double angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

// Frames whose lowest joint is a chosen contact point: every other joint sits
// 0.3-1.5 m above it along `normal` with a small sideways offset.
inline PoseSequence3D contact_sequence(const std::vector<Eigen::Vector3d>& contacts, const Eigen::Vector3d& normal,
                                       Rng& rng) {
    PoseSequence3D seq;
    seq.skeleton = canonical17();
    const Eigen::Vector3d n = normal.normalized();
    const Eigen::Vector3d u = n.unitOrthogonal();
    const Eigen::Vector3d w = n.cross(u);
    for (const auto& p : contacts) {
        Frame3 f(17, 3);
        for (Eigen::Index j = 0; j < 17; ++j) {
            const Eigen::Vector3d q =
                p + rng.uniform(0.3, 1.5) * n + rng.uniform(-0.05, 0.05) * u + rng.uniform(-0.05, 0.05) * w;
            f.row(j) = q.transpose();
        }
        f.row(static_cast<Eigen::Index>(canonical_joint::right_ankle)) = p.transpose();
        // Hips apart so the sequence is a valid figure for facing alignment.
        f.row(static_cast<Eigen::Index>(canonical_joint::left_hip)) = (p + 0.9 * n + 0.1 * u).transpose();
        f.row(static_cast<Eigen::Index>(canonical_joint::right_hip)) = (p + 0.9 * n - 0.1 * u).transpose();
        seq.frames.push_back(f);
    }
    return seq;
}

// `inliers` contact points on the plane n.x = offset plus `outliers` lifted
// 0.1-0.9 m off it, shuffled.
inline PoseSequence3D plane_with_outliers(const Eigen::Vector3d& normal, double offset, std::size_t inliers,
                                          std::size_t outliers, Rng& rng) {
    const Eigen::Vector3d n = normal.normalized();
    const Eigen::Vector3d u = n.unitOrthogonal();
    const Eigen::Vector3d w = n.cross(u);
    std::vector<Eigen::Vector3d> pts;
    for (std::size_t i = 0; i < inliers + outliers; ++i) {
        const double lift = i < inliers ? 0.0 : rng.uniform(0.1, 0.9);
        pts.push_back(offset * n + rng.uniform(-3.0, 3.0) * u + rng.uniform(-3.0, 3.0) * w + lift * n);
    }
    rng.shuffle(pts.begin(), pts.end());
    return contact_sequence(pts, n, rng);
}

// ---- segmental F1 oracle -------------------------------------------------

struct RunSegment {
    std::size_t start = 0;
    std::size_t end = 0;
    ActionLabel label;
};

inline std::vector<RunSegment> run_length(const std::vector<ActionLabel>& labels) {
    std::vector<RunSegment> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (out.empty() || !(out.back().label == labels[i])) out.push_back({i, i, labels[i]});
        out.back().end = i + 1;
    }
    return out;
}

struct OracleCounts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

// Counts from an exhaustive search over every one-to-one assignment of
// same-label segments whose IoU is at least k percent (integer arithmetic).
// Labels for which `excluded` returns true are ignored.
template <class Excluded>
OracleCounts brute_force_counts(const LabeledTimeline& pred, const LabeledTimeline& gt, int k, Excluded excluded) {
    const auto ps = run_length(pred.labels);
    const auto gs = run_length(gt.labels);
    std::vector<ActionLabel> labels;
    for (const auto& s : ps) {
        if (!excluded(s.label) && std::find(labels.begin(), labels.end(), s.label) == labels.end()) labels.push_back(s.label);
    }
    for (const auto& s : gs) {
        if (!excluded(s.label) && std::find(labels.begin(), labels.end(), s.label) == labels.end()) labels.push_back(s.label);
    }
    OracleCounts c;
    for (const auto& label : labels) {
        std::vector<RunSegment> p, g;
        for (const auto& s : ps) {
            if (s.label == label) p.push_back(s);
        }
        for (const auto& s : gs) {
            if (s.label == label) g.push_back(s);
        }
        const auto eligible = [&](std::size_t i, std::size_t j) {
            const std::size_t lo = std::max(p[i].start, g[j].start), hi = std::min(p[i].end, g[j].end);
            const std::size_t inter = hi > lo ? hi - lo : 0;
            const std::size_t uni = (p[i].end - p[i].start) + (g[j].end - g[j].start) - inter;
            return inter > 0 && inter * 100 >= static_cast<std::size_t>(k) * uni;
        };
        std::vector<bool> used(g.size(), false);
        std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
            if (i == p.size()) return 0;
            std::size_t top = best(i + 1);
            for (std::size_t j = 0; j < g.size(); ++j) {
                if (used[j] || !eligible(i, j)) continue;
                used[j] = true;
                top = std::max(top, 1 + best(i + 1));
                used[j] = false;
            }
            return top;
        };
        const std::size_t tp = best(0);
        c.tp += tp;
        c.fp += p.size() - tp;
        c.fn += g.size() - tp;
    }
    return c;
}

struct OracleScore {
    double precision = 0, recall = 0, f1 = 0;
};

inline OracleScore oracle_score(const OracleCounts& c) {
    const double p = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double r = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return {100.0 * p, 100.0 * r, p + r == 0.0 ? 0.0 : 100.0 * 2.0 * p * r / (p + r)};
}

// A ground-truth timeline of `segments` runs over a small vocabulary, with no
// label appearing in more than `max_per_label` runs, and a prediction that is
// either a boundary-perturbed copy or an independent draw of the same length.
inline std::pair<LabeledTimeline, LabeledTimeline> random_timeline_pair(Rng& rng, std::size_t max_per_label = 8) {
    const std::vector<ActionLabel> vocab{ActionLabel::none(),         ActionLabel::entry(JumpType::Lutz),
                                         ActionLabel::jump(JumpType::Lutz, 3), ActionLabel::jump(JumpType::Axel, 2),
                                         ActionLabel::jump(JumpType::Flip, 3), ActionLabel::landing()};
    const auto draw = [&](std::size_t segments) {
        for (;;) {
            auto t = random_timeline(SchemaLevel::Element, segments, 12, rng, vocab);
            const auto runs = run_length(t.labels);
            // At least one jump frame, so the ground truth has evaluable frames.
            bool ok = std::any_of(t.labels.begin(), t.labels.end(), [](const ActionLabel& l) { return l.phase == Phase::Jump; });
            for (const auto& l : vocab) {
                std::size_t n = 0;
                for (const auto& r : runs) n += r.label == l;
                ok = ok && n <= max_per_label;
            }
            if (ok) return t;
        }
    };
    LabeledTimeline gt = draw(2 + rng.index(14));
    LabeledTimeline pred;
    if (rng.bernoulli(0.5)) {
        pred = gt;
        // Shift run boundaries by copying neighbours and flip a few labels.
        for (std::size_t i = 1; i < pred.labels.size(); ++i) {
            if (rng.bernoulli(0.15)) pred.labels[i] = pred.labels[i - 1];
        }
        for (std::size_t i = pred.labels.size() - 1; i > 0; --i) {
            if (rng.bernoulli(0.1)) pred.labels[i - 1] = pred.labels[i];
        }
        if (rng.bernoulli(0.3)) pred.labels[rng.index(pred.labels.size())] = vocab[rng.index(vocab.size())];
    } else {
        pred = draw(2 + rng.index(14));
    }
    pred.labels.resize(gt.labels.size(), ActionLabel::none());
    const auto runs = run_length(pred.labels);
    for (const auto& l : vocab) {
        std::size_t n = 0;
        for (const auto& r : runs) n += r.label == l;
        if (n > max_per_label) return random_timeline_pair(rng, max_per_label);
    }
    pred.video_id = gt.video_id;
    return {pred, gt};
}

}  // namespace skatepose::testing
