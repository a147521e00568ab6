#pragma once

#include "skatepose/geometry.hpp"
#include "skatepose/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <vector>

namespace skatepose {

inline constexpr double kMaxElevation = std::numbers::pi / 6.0;
inline constexpr double kMinDistance = 5.0;
inline constexpr double kMaxDistance = 10.0;

// Camera on a sphere around the origin, looking at the origin with an upright
// (world +z) up vector.
struct VirtualCamera {
    double azimuth = 0.0;    // (-pi, pi]
    double elevation = 0.0;  // [-pi/6, pi/6]
    double distance = kMinDistance;

    // Range-checked constructor; throws Error(Validation).
    static VirtualCamera make(double azimuth, double elevation, double distance);

    // Unit vector from the origin toward the camera.
    Eigen::Vector3d direction() const;
    Eigen::Vector3d position() const { return distance * direction(); }
};

using Coords2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

struct Pose2D {
    Coords2 coords;          // N x 2, image-plane units
    std::vector<bool> mask;  // true = joint zeroed by masking

    std::size_t joint_count() const noexcept { return static_cast<std::size_t>(coords.rows()); }
    // Interleaved x0, y0, x1, y1, ... (2N values).
    std::vector<double> flatten() const;
    void flatten_into(double* out) const;

    friend bool operator==(const Pose2D& a, const Pose2D& b) { return a.coords == b.coords && a.mask == b.mask; }
};

struct AugmentConfig {
    double jitter_variance = 0.01;
    double mask_prob = 0.01;
    double flip_prob = 0.5;
    // Rescale every projected view to a fixed RMS joint radius before jitter.
    bool normalize_scale = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ContrastivePair {
    Pose2D anchor;
    Pose2D positive;
    Eigen::Vector3d v_anchor = Eigen::Vector3d::UnitX();
    Eigen::Vector3d v_positive = Eigen::Vector3d::UnitX();
};

// RMS distance of the unmasked joints from the root after normalize_2d_scale.
inline constexpr double kImageRmsRadius = 1.0;

VirtualCamera sample_virtual_camera(Rng& rng);

// Pinhole projection with unit focal length, centered on the root joint.
// Throws Error(Projection) if a joint is at or behind the camera plane.
Pose2D project_perspective(const Frame3& pose, const VirtualCamera& cam, std::size_t root = 0);
inline Pose2D project_perspective(const CanonicalPose& pose, const VirtualCamera& cam, std::size_t root = 0) {
    return project_perspective(pose.coords, cam, root);
}

// Uniform rescale so the unmasked joints have RMS radius kImageRmsRadius
// around the root. Poses with zero extent are returned unchanged.
Pose2D normalize_2d_scale(const Pose2D& pose, std::size_t root = 0);

// Negates x; joint identities are kept as they are.
CanonicalPose flip_horizontal(const CanonicalPose& pose);

Pose2D jitter_2d(const Pose2D& pose, double variance, Rng& rng);
Pose2D mask_joints(const Pose2D& pose, double prob, Rng& rng);

// Projects, optionally normalizes, jitters and masks one view.
Pose2D augment_view(const Frame3& pose, const VirtualCamera& cam, const AugmentConfig& cfg, Rng& rng);

ContrastivePair make_contrastive_pair(const CanonicalPose& pose, const AugmentConfig& cfg, Rng& rng);
// Same pipeline with the two cameras supplied by the caller.
ContrastivePair make_contrastive_pair(const CanonicalPose& pose, const AugmentConfig& cfg, const VirtualCamera& cam_a,
                                      const VirtualCamera& cam_b, Rng& rng);

// One pair per pose with per-pose seeds derived from (seed, index), so the
// result does not depend on scheduling.
std::vector<ContrastivePair> make_contrastive_pairs(const std::vector<CanonicalPose>& poses, const AugmentConfig& cfg,
                                                    std::uint64_t seed);

// {anchor, positive, mask_a, mask_p, v_a, v_p} per line.
void write_pairs_jsonl(std::ostream& out, const std::vector<ContrastivePair>& pairs);
std::vector<ContrastivePair> read_pairs_jsonl(std::istream& in);

}  // namespace skatepose
