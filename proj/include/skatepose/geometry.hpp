#pragma once

#include "skatepose/skeleton.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace skatepose {

// Points p on the plane satisfy normal . p == offset.
struct Plane {
    Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
    double offset = 0.0;

    double signed_distance(const Eigen::Vector3d& p) const { return normal.dot(p) - offset; }
};

struct RansacConfig {
    std::size_t iterations = 1000;
    double inlier_threshold = 0.02;  // meters
    // Expected share of per-frame lowest points that touch the ground. The
    // winning plane must be supported by at least half of this share.
    double contact_fraction = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

inline constexpr double kTorsoChainLength = 0.4;

struct CanonicalPose {
    Frame3 coords;              // N x 3, dimensionless
    double facing_angle = 0.0;  // z-rotation applied by facing alignment, (-pi, pi]
};

struct CanonicalSequence {
    SkeletonPtr skeleton;
    std::vector<CanonicalPose> poses;
    double fps = 30.0;
    std::string subject;
    std::string trial;
};

// RANSAC over the lowest joint of every frame (3-point samples, least-squares
// refit on the consensus set). The normal points toward the side holding the
// majority of all joints.
Plane fit_ground_plane(const PoseSequence3D& seq, const RansacConfig& cfg);

// Least-squares plane through the points (smallest singular vector).
Plane fit_plane_least_squares(const std::vector<Eigen::Vector3d>& points);

// Minimal-angle rotation taking `from` onto +z. An antiparallel input maps
// through a half turn about +x.
Eigen::Matrix3d rotation_to_up(const Eigen::Vector3d& from);

PoseSequence3D align_to_gravity(const PoseSequence3D& seq, const Plane& plane);

struct FacingResult {
    Frame3 pose;
    double angle = 0.0;
};

// Centers the hip midpoint in xy and rotates about z so the left hip lies on
// +x. Throws Error(DegenerateFacing) when the hips coincide in xy.
FacingResult align_facing(const Frame3& pose, const Skeleton& skeleton);
// Same centering, fixed rotation angle.
Frame3 rotate_facing(const Frame3& pose, const Skeleton& skeleton, double angle);

// Mid-hip to the origin, torso chain (mid-hip -> chest -> neck) scaled to 0.4.
Frame3 normalize_pose(const Frame3& pose, const Skeleton& skeleton);

double torso_chain_length(const Frame3& pose, const Skeleton& skeleton);
Eigen::Vector3d mid_hip(const Frame3& pose, const Skeleton& skeleton);

CanonicalSequence canonicalize_sequence(const PoseSequence3D& seq, const RansacConfig& cfg);

// Flattened coordinates followed by (cos, sin) of the facing angle: 3N + 2.
std::vector<double> pose3d_feature_vector(const CanonicalPose& pose);

// Same schema as pose datasets plus a per-frame "facing_angle" array.
void write_canonical_jsonl(std::ostream& out, const std::vector<CanonicalSequence>& seqs);
std::vector<CanonicalSequence> read_canonical_jsonl(std::istream& in);
void save_canonical_jsonl(const std::filesystem::path& path, const std::vector<CanonicalSequence>& seqs);
std::vector<CanonicalSequence> load_canonical_jsonl(const std::filesystem::path& path);

double wrap_angle(double radians);  // into (-pi, pi]

}  // namespace skatepose
