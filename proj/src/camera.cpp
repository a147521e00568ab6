#include "skatepose/camera.hpp"

#include "skatepose/error.hpp"

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include <cmath>

namespace skatepose {

VirtualCamera VirtualCamera::make(double azimuth, double elevation, double distance) {
    if (!(azimuth > -std::numbers::pi && azimuth <= std::numbers::pi)) {
        fail(ErrorKind::Validation, "camera azimuth must lie in (-pi, pi]");
    }
    if (!(std::abs(elevation) <= kMaxElevation)) fail(ErrorKind::Validation, "camera elevation must lie in [-pi/6, pi/6]");
    if (!(distance >= kMinDistance && distance <= kMaxDistance)) fail(ErrorKind::Validation, "camera distance must lie in [5, 10]");
    return {azimuth, elevation, distance};
}

Eigen::Vector3d VirtualCamera::direction() const {
    const double ce = std::cos(elevation);
    return {ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation)};
}

std::vector<double> Pose2D::flatten() const {
    std::vector<double> out(2 * joint_count());
    flatten_into(out.data());
    return out;
}

void Pose2D::flatten_into(double* out) const {
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        out[2 * i] = coords(i, 0);
        out[2 * i + 1] = coords(i, 1);
    }
}

void AugmentConfig::validate() const {
    if (!(jitter_variance >= 0.0)) fail(ErrorKind::Config, "jitter variance must be non-negative");
    for (double p : {mask_prob, flip_prob}) {
        if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::Config, "augmentation probabilities must lie in [0, 1]");
    }
}

VirtualCamera sample_virtual_camera(Rng& rng) {
    VirtualCamera cam;
    cam.azimuth = rng.uniform_left_open(-std::numbers::pi, std::numbers::pi);
    cam.elevation = rng.uniform(-kMaxElevation, kMaxElevation);
    cam.distance = rng.uniform(kMinDistance, kMaxDistance);
    return cam;
}

Pose2D project_perspective(const Frame3& pose, const VirtualCamera& cam, std::size_t root) {
    const Eigen::Vector3d center = cam.position();
    const Eigen::Vector3d forward = -cam.direction();
    const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d up = right.cross(forward);

    const auto n = pose.rows();
    if (static_cast<Eigen::Index>(root) >= n) fail(ErrorKind::Shape, "root joint index out of range");
    Pose2D out;
    out.coords.resize(n, 2);
    out.mask.assign(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector3d rel = pose.row(i).transpose() - center;
        const double depth = forward.dot(rel);
        if (!(depth > 1e-9)) fail(ErrorKind::Projection, "joint " + std::to_string(i) + " is at or behind the camera plane");
        out.coords(i, 0) = right.dot(rel) / depth;
        out.coords(i, 1) = up.dot(rel) / depth;
    }
    const Eigen::RowVector2d origin = out.coords.row(static_cast<Eigen::Index>(root));
    out.coords.rowwise() -= origin;
    return out;
}

Pose2D normalize_2d_scale(const Pose2D& pose, std::size_t root) {
    const Eigen::RowVector2d origin = pose.coords.row(static_cast<Eigen::Index>(root));
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < pose.coords.rows(); ++i) {
        if (pose.mask[static_cast<std::size_t>(i)]) continue;
        sum += (pose.coords.row(i) - origin).squaredNorm();
        ++count;
    }
    if (count == 0 || !(sum > 0.0)) return pose;
    const double scale = kImageRmsRadius / std::sqrt(sum / static_cast<double>(count));
    Pose2D out = pose;
    for (Eigen::Index i = 0; i < out.coords.rows(); ++i) {
        if (!out.mask[static_cast<std::size_t>(i)]) out.coords.row(i) = (pose.coords.row(i) - origin) * scale;
    }
    return out;
}

CanonicalPose flip_horizontal(const CanonicalPose& pose) {
    CanonicalPose out = pose;
    out.coords.col(0) = -pose.coords.col(0);
    return out;
}

Pose2D jitter_2d(const Pose2D& pose, double variance, Rng& rng) {
    if (!(variance >= 0.0)) fail(ErrorKind::Validation, "jitter variance must be non-negative");
    Pose2D out = pose;
    if (variance == 0.0) return out;
    const double sd = std::sqrt(variance);
    for (Eigen::Index i = 0; i < out.coords.rows(); ++i) {
        if (out.mask[static_cast<std::size_t>(i)]) continue;
        out.coords(i, 0) += rng.normal(0.0, sd);
        out.coords(i, 1) += rng.normal(0.0, sd);
    }
    return out;
}

Pose2D mask_joints(const Pose2D& pose, double prob, Rng& rng) {
    if (!(prob >= 0.0 && prob <= 1.0)) fail(ErrorKind::Validation, "mask probability must lie in [0, 1]");
    Pose2D out = pose;
    if (prob == 0.0) return out;
    for (Eigen::Index i = 0; i < out.coords.rows(); ++i) {
        if (rng.bernoulli(prob)) {
            out.coords.row(i).setZero();
            out.mask[static_cast<std::size_t>(i)] = true;
        }
    }
    return out;
}

Pose2D augment_view(const Frame3& pose, const VirtualCamera& cam, const AugmentConfig& cfg, Rng& rng) {
    Pose2D view = project_perspective(pose, cam);
    if (cfg.normalize_scale) view = normalize_2d_scale(view);
    view = jitter_2d(view, cfg.jitter_variance, rng);
    return mask_joints(view, cfg.mask_prob, rng);
}

ContrastivePair make_contrastive_pair(const CanonicalPose& pose, const AugmentConfig& cfg, const VirtualCamera& cam_a,
                                      const VirtualCamera& cam_b, Rng& rng) {
    cfg.validate();
    const bool flip = cfg.flip_prob > 0.0 && rng.bernoulli(cfg.flip_prob);
    const Frame3 body = flip ? flip_horizontal(pose).coords : pose.coords;
    ContrastivePair pair;
    pair.anchor = augment_view(body, cam_a, cfg, rng);
    pair.positive = augment_view(body, cam_b, cfg, rng);
    pair.v_anchor = cam_a.direction();
    pair.v_positive = cam_b.direction();
    return pair;
}

ContrastivePair make_contrastive_pair(const CanonicalPose& pose, const AugmentConfig& cfg, Rng& rng) {
    const VirtualCamera cam_a = sample_virtual_camera(rng);
    const VirtualCamera cam_b = sample_virtual_camera(rng);
    return make_contrastive_pair(pose, cfg, cam_a, cam_b, rng);
}

std::vector<ContrastivePair> make_contrastive_pairs(const std::vector<CanonicalPose>& poses, const AugmentConfig& cfg,
                                                    std::uint64_t seed) {
    std::vector<ContrastivePair> out;
    out.reserve(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
        Rng rng(derive_seed(seed, i));
        out.push_back(make_contrastive_pair(poses[i], cfg, rng));
    }
    return out;
}

using nlohmann::json;

namespace {

json coords_json(const Pose2D& p) {
    json a = json::array();
    for (Eigen::Index i = 0; i < p.coords.rows(); ++i) a.push_back({p.coords(i, 0), p.coords(i, 1)});
    return a;
}

Pose2D pose_from_json(const json& coords, const json& mask) {
    Pose2D p;
    const auto n = static_cast<Eigen::Index>(coords.size());
    if (mask.size() != coords.size()) fail(ErrorKind::Parse, "mask length differs from joint count");
    p.coords.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        p.coords(i, 0) = coords[static_cast<std::size_t>(i)].at(0).get<double>();
        p.coords(i, 1) = coords[static_cast<std::size_t>(i)].at(1).get<double>();
        p.mask.push_back(mask[static_cast<std::size_t>(i)].get<bool>());
    }
    return p;
}

}  // namespace

void write_pairs_jsonl(std::ostream& out, const std::vector<ContrastivePair>& pairs) {
    for (const auto& p : pairs) {
        json j{{"anchor", coords_json(p.anchor)},
               {"positive", coords_json(p.positive)},
               {"mask_a", p.anchor.mask},
               {"mask_p", p.positive.mask},
               {"v_a", {p.v_anchor.x(), p.v_anchor.y(), p.v_anchor.z()}},
               {"v_p", {p.v_positive.x(), p.v_positive.y(), p.v_positive.z()}}};
        out << j.dump() << '\n';
    }
}

std::vector<ContrastivePair> read_pairs_jsonl(std::istream& in) {
    std::vector<ContrastivePair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            ContrastivePair p;
            p.anchor = pose_from_json(j.at("anchor"), j.at("mask_a"));
            p.positive = pose_from_json(j.at("positive"), j.at("mask_p"));
            for (int k = 0; k < 3; ++k) {
                p.v_anchor[k] = j.at("v_a").at(static_cast<std::size_t>(k)).get<double>();
                p.v_positive[k] = j.at("v_p").at(static_cast<std::size_t>(k)).get<double>();
            }
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace skatepose
