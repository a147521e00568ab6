#include "skatepose/geometry.hpp"

#include "skatepose/error.hpp"
#include "skatepose/rng.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace skatepose {

void RansacConfig::validate() const {
    if (iterations < 1) fail(ErrorKind::Config, "RANSAC needs at least one iteration");
    if (!(inlier_threshold > 0.0)) fail(ErrorKind::Config, "RANSAC inlier threshold must be positive");
    if (!(contact_fraction > 0.0 && contact_fraction <= 1.0)) fail(ErrorKind::Config, "contact fraction must lie in (0, 1]");
}

double wrap_angle(double radians) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double a = std::fmod(radians, two_pi);
    if (a <= -std::numbers::pi) a += two_pi;
    if (a > std::numbers::pi) a -= two_pi;
    return a;
}

Plane fit_plane_least_squares(const std::vector<Eigen::Vector3d>& points) {
    if (points.size() < 3) fail(ErrorKind::InsufficientData, "a plane needs at least 3 points");
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : points) centroid += p;
    centroid /= static_cast<double>(points.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto& p : points) {
        const Eigen::Vector3d d = p - centroid;
        scatter += d * d.transpose();
    }
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(scatter, Eigen::ComputeFullU);
    Plane plane;
    plane.normal = svd.matrixU().col(2).normalized();
    plane.offset = plane.normal.dot(centroid);
    return plane;
}

namespace {

std::vector<Eigen::Vector3d> lowest_points(const PoseSequence3D& seq) {
    std::vector<Eigen::Vector3d> out;
    out.reserve(seq.frames.size());
    for (const auto& f : seq.frames) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < f.rows(); ++i) {
            if (f(i, 2) < f(best, 2)) best = i;
        }
        out.emplace_back(f.row(best).transpose());
    }
    return out;
}

}  // namespace

Plane fit_ground_plane(const PoseSequence3D& seq, const RansacConfig& cfg) {
    cfg.validate();
    seq.validate();
    const auto candidates = lowest_points(seq);
    const std::size_t m = candidates.size();
    if (m < 3) {
        fail(ErrorKind::InsufficientData, "ground plane needs at least 3 frames, got " + std::to_string(m));
    }

    double extent = 0.0;
    for (const auto& p : candidates) extent = std::max(extent, (p - candidates.front()).norm());
    const double degenerate_tol = 1e-12 * std::max(1.0, extent * extent);

    Rng rng(cfg.seed);
    std::size_t best_count = 0;
    double best_residual = 0.0;
    std::vector<std::size_t> best_inliers;
    std::vector<std::size_t> inliers;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const std::size_t i0 = rng.index(m);
        std::size_t i1 = rng.index(m - 1);
        if (i1 >= i0) ++i1;
        std::size_t i2 = rng.index(m - 2);
        for (std::size_t taken : {std::min(i0, i1), std::max(i0, i1)}) {
            if (i2 >= taken) ++i2;
        }
        const Eigen::Vector3d n = (candidates[i1] - candidates[i0]).cross(candidates[i2] - candidates[i0]);
        const double len = n.norm();
        if (len <= degenerate_tol) continue;
        const Eigen::Vector3d unit = n / len;
        const double offset = unit.dot(candidates[i0]);
        inliers.clear();
        double residual = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double d = std::abs(unit.dot(candidates[k]) - offset);
            if (d < cfg.inlier_threshold) {
                inliers.push_back(k);
                residual += d * d;
            }
        }
        // Equal consensus: keep the tighter fit.
        if (inliers.size() > best_count || (inliers.size() == best_count && residual < best_residual)) {
            best_count = inliers.size();
            best_residual = residual;
            best_inliers = inliers;
        }
    }
    if (best_count == 0) fail(ErrorKind::FitFailure, "every RANSAC sample was degenerate (collinear contact points)");
    const auto required = static_cast<std::size_t>(std::ceil(0.5 * cfg.contact_fraction * static_cast<double>(m)));
    if (best_count < std::max<std::size_t>(3, required)) {
        fail(ErrorKind::FitFailure, "best ground plane is supported by only " + std::to_string(best_count) + " of " +
                                        std::to_string(m) + " lowest points");
    }

    std::vector<Eigen::Vector3d> support;
    support.reserve(best_inliers.size());
    for (auto k : best_inliers) support.push_back(candidates[k]);
    Plane plane = fit_plane_least_squares(support);

    long balance = 0;
    for (const auto& f : seq.frames) {
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
            const double d = plane.signed_distance(f.row(i).transpose());
            balance += (d > 0.0) - (d < 0.0);
        }
    }
    if (balance < 0) {
        plane.normal = -plane.normal;
        plane.offset = -plane.offset;
    }
    return plane;
}

Eigen::Matrix3d rotation_to_up(const Eigen::Vector3d& from) {
    const Eigen::Vector3d n = from.normalized();
    const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
    const Eigen::Vector3d v = n.cross(up);
    const double s = v.norm();
    const double c = n.dot(up);
    if (s < 1e-12) {
        if (c > 0.0) return Eigen::Matrix3d::Identity();
        return Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
    }
    Eigen::Matrix3d vx;
    vx << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return Eigen::Matrix3d::Identity() + vx + vx * vx * ((1.0 - c) / (s * s));
}

PoseSequence3D align_to_gravity(const PoseSequence3D& seq, const Plane& plane) {
    const double len = plane.normal.norm();
    if (!(std::abs(len - 1.0) <= 1e-9) || !std::isfinite(plane.offset)) {
        fail(ErrorKind::Validation, "plane normal must be unit length");
    }
    const Eigen::Matrix3d r = rotation_to_up(plane.normal);
    PoseSequence3D out = seq;
    for (auto& f : out.frames) {
        f = (f * r.transpose()).eval();
        f.col(2).array() -= plane.offset;
    }
    return out;
}

Eigen::Vector3d mid_hip(const Frame3& pose, const Skeleton& skeleton) {
    return 0.5 * (pose.row(static_cast<Eigen::Index>(skeleton.left_hip)) +
                  pose.row(static_cast<Eigen::Index>(skeleton.right_hip)))
                     .transpose();
}

Frame3 rotate_facing(const Frame3& pose, const Skeleton& skeleton, double angle) {
    const Eigen::Vector3d mid = mid_hip(pose, skeleton);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    Frame3 out(pose.rows(), 3);
    for (Eigen::Index i = 0; i < pose.rows(); ++i) {
        const double x = pose(i, 0) - mid.x();
        const double y = pose(i, 1) - mid.y();
        out(i, 0) = c * x - s * y;
        out(i, 1) = s * x + c * y;
        out(i, 2) = pose(i, 2);
    }
    return out;
}

FacingResult align_facing(const Frame3& pose, const Skeleton& skeleton) {
    const auto l = pose.row(static_cast<Eigen::Index>(skeleton.left_hip));
    const auto r = pose.row(static_cast<Eigen::Index>(skeleton.right_hip));
    const double dx = 0.5 * (l(0) - r(0));
    const double dy = 0.5 * (l(1) - r(1));
    if (std::hypot(2.0 * dx, 2.0 * dy) <= 1e-6) {
        fail(ErrorKind::DegenerateFacing, "left and right hips coincide in the ground plane");
    }
    const double angle = wrap_angle(-std::atan2(dy, dx));
    return {rotate_facing(pose, skeleton, angle), angle};
}

double torso_chain_length(const Frame3& pose, const Skeleton& skeleton) {
    const Eigen::Vector3d mid = mid_hip(pose, skeleton);
    const Eigen::Vector3d chest = pose.row(static_cast<Eigen::Index>(skeleton.chest)).transpose();
    const Eigen::Vector3d neck = pose.row(static_cast<Eigen::Index>(skeleton.neck)).transpose();
    return (chest - mid).norm() + (neck - chest).norm();
}

Frame3 normalize_pose(const Frame3& pose, const Skeleton& skeleton) {
    const double len = torso_chain_length(pose, skeleton);
    if (!(len > 1e-9) || !std::isfinite(len)) fail(ErrorKind::Normalization, "torso chain length is zero");
    const Eigen::RowVector3d mid = mid_hip(pose, skeleton).transpose();
    const double scale = kTorsoChainLength / len;
    Frame3 out = (pose.rowwise() - mid) * scale;
    return out;
}

CanonicalSequence canonicalize_sequence(const PoseSequence3D& seq, const RansacConfig& cfg) {
    seq.validate();
    const Plane plane = fit_ground_plane(seq, cfg);
    const PoseSequence3D aligned = align_to_gravity(seq, plane);
    const Skeleton& sk = *seq.skeleton;

    CanonicalSequence out;
    out.skeleton = seq.skeleton;
    out.fps = seq.fps;
    out.subject = seq.subject;
    out.trial = seq.trial;
    out.poses.reserve(aligned.frames.size());
    double previous = 0.0;
    for (std::size_t t = 0; t < aligned.frames.size(); ++t) {
        FacingResult facing;
        try {
            facing = align_facing(aligned.frames[t], sk);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateFacing || t == 0) throw;
            facing = {rotate_facing(aligned.frames[t], sk, previous), previous};
        }
        previous = facing.angle;
        out.poses.push_back({normalize_pose(facing.pose, sk), facing.angle});
    }
    return out;
}

std::vector<double> pose3d_feature_vector(const CanonicalPose& pose) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(pose.coords.size()) + 2);
    for (Eigen::Index i = 0; i < pose.coords.rows(); ++i) {
        for (int k = 0; k < 3; ++k) out.push_back(pose.coords(i, k));
    }
    out.push_back(std::cos(pose.facing_angle));
    out.push_back(std::sin(pose.facing_angle));
    return out;
}

using nlohmann::json;

void write_canonical_jsonl(std::ostream& out, const std::vector<CanonicalSequence>& seqs) {
    for (const auto& s : seqs) {
        json frames = json::array();
        json angles = json::array();
        for (const auto& p : s.poses) {
            json jf = json::array();
            for (Eigen::Index i = 0; i < p.coords.rows(); ++i) jf.push_back({p.coords(i, 0), p.coords(i, 1), p.coords(i, 2)});
            frames.push_back(std::move(jf));
            angles.push_back(p.facing_angle);
        }
        out << json{{"subject", s.subject}, {"trial", s.trial}, {"fps", s.fps}, {"skeleton", s.skeleton->name},
                    {"frames", std::move(frames)}, {"facing_angle", std::move(angles)}}
                   .dump()
            << '\n';
    }
}

std::vector<CanonicalSequence> read_canonical_jsonl(std::istream& in) {
    std::vector<CanonicalSequence> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            CanonicalSequence s;
            s.subject = j.at("subject").get<std::string>();
            s.trial = j.at("trial").get<std::string>();
            s.fps = j.at("fps").get<double>();
            s.skeleton = find_skeleton(j.at("skeleton").get<std::string>());
            const auto& frames = j.at("frames");
            const auto& angles = j.at("facing_angle");
            if (frames.size() != angles.size()) {
                fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": facing_angle length differs from frames");
            }
            const auto n = static_cast<Eigen::Index>(s.skeleton->joint_count());
            for (std::size_t t = 0; t < frames.size(); ++t) {
                CanonicalPose p;
                p.coords.resize(n, 3);
                if (static_cast<Eigen::Index>(frames[t].size()) != n) {
                    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": wrong joint count");
                }
                for (Eigen::Index i = 0; i < n; ++i) {
                    for (int k = 0; k < 3; ++k) {
                        p.coords(i, k) = frames[t][static_cast<std::size_t>(i)].at(static_cast<std::size_t>(k)).get<double>();
                    }
                }
                if (!p.coords.allFinite()) fail(ErrorKind::Validation, "line " + std::to_string(line_no) + ": non-finite coordinate");
                p.facing_angle = angles[t].get<double>();
                s.poses.push_back(std::move(p));
            }
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void save_canonical_jsonl(const std::filesystem::path& path, const std::vector<CanonicalSequence>& seqs) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
    write_canonical_jsonl(out, seqs);
}

std::vector<CanonicalSequence> load_canonical_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
    return read_canonical_jsonl(in);
}

}  // namespace skatepose
