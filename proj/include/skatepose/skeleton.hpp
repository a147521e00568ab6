#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skatepose {

struct Skeleton {
    std::string name;
    std::vector<std::string> joints;
    std::vector<std::size_t> parent;  // root is its own parent
    std::size_t left_hip = 0;
    std::size_t right_hip = 0;
    std::size_t chest = 0;
    std::size_t neck = 0;

    std::size_t joint_count() const noexcept { return joints.size(); }
    std::size_t root() const;
    std::optional<std::size_t> find(std::string_view joint) const;
    // Throws Error(Validation) on duplicate names, bad landmarks or a parent
    // array that is not a single-rooted tree.
    void validate() const;

    friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

using SkeletonPtr = std::shared_ptr<const Skeleton>;

// 17-joint lifting convention: pelvis(root), right leg, left leg, spine,
// thorax, neck, head, left arm, right arm.
namespace canonical_joint {
inline constexpr std::size_t pelvis = 0, right_hip = 1, right_knee = 2, right_ankle = 3, left_hip = 4,
                             left_knee = 5, left_ankle = 6, spine = 7, thorax = 8, neck = 9, head = 10,
                             left_shoulder = 11, left_elbow = 12, left_wrist = 13, right_shoulder = 14,
                             right_elbow = 15, right_wrist = 16;
inline constexpr std::size_t count = 17;
}  // namespace canonical_joint

SkeletonPtr canonical17();
// Marker-style 83-joint capture skeleton: torso 14, head 13, 13 per arm, 15 per leg.
SkeletonPtr capture83();

// Built-in skeletons plus anything added through register_skeleton.
SkeletonPtr find_skeleton(std::string_view name);
void register_skeleton(Skeleton skeleton);

using Frame3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct PoseSequence3D {
    SkeletonPtr skeleton;
    std::vector<Frame3> frames;
    double fps = 30.0;
    std::string subject;
    std::string trial;

    std::size_t frame_count() const noexcept { return frames.size(); }
    void validate() const;
};

bool operator==(const PoseSequence3D& a, const PoseSequence3D& b);

enum class RuleKind { Copy, Midpoint, Drop };

struct KeypointRule {
    RuleKind kind = RuleKind::Drop;
    std::size_t a = 0;
    std::size_t b = 0;

    friend bool operator==(const KeypointRule&, const KeypointRule&) = default;
};

struct KeypointMap {
    SkeletonPtr source;
    SkeletonPtr target;
    std::vector<KeypointRule> rules;  // one per target joint
    std::string version;

    void validate() const;
};

// Parses the plain-text rule table:
//   source <skeleton>
//   target <skeleton>
//   <target_joint> <- copy <src> | mid <srcA> <srcB> | drop
KeypointMap parse_keypoint_map(std::string_view text);
KeypointMap load_keypoint_map(const std::filesystem::path& path);
std::string format_keypoint_map(const KeypointMap& map);

KeypointMap identity_map(SkeletonPtr skeleton);

// Dropped target joints are emitted at their parent's position.
PoseSequence3D remap_keypoints(const PoseSequence3D& seq, const KeypointMap& map);

// Rule table equivalent to applying ab then bc, when it stays expressible with
// copy/midpoint rules over the original source.
std::optional<KeypointMap> compose(const KeypointMap& ab, const KeypointMap& bc);

std::filesystem::path default_data_dir();
std::filesystem::path default_capture83_map_path();

}  // namespace skatepose
