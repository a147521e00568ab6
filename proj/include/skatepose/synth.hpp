#pragma once

#include "skatepose/dataset.hpp"
#include "skatepose/geometry.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace skatepose {

// Per-instance limb angles (radians) added on top of the class pattern.
// Index 0 is the left limb, 1 the right.
struct LimbStyle {
    std::array<double, 2> arm_azimuth{};    // 0 = sideways, +pi/2 = forward
    std::array<double, 2> arm_elevation{};  // +pi/2 = straight up
    std::array<double, 2> elbow{};
    std::array<double, 2> hip_flexion{};
    std::array<double, 2> knee{};
    std::array<double, 2> leg_abduction{};
    double torso_lean = 0.0;   // forward pitch of the upper body
    double torso_side = 0.0;   // sideways bend of the upper body
    double torso_twist = 0.0;  // upper-body yaw relative to the hips
    double swing = 0.15;       // oscillation amplitude
};

struct MotionSpec {
    std::size_t class_id = 0;
    std::size_t frames = 32;
    double angular_velocity = 0.0;  // rad/frame about the vertical axis
    double apex_height = 0.4;       // meters above the grounded root height
    double airborne_fraction = 0.4;  // share of frames off the ground, centered
    std::array<double, 4> limb_phase{};  // left arm, right arm, left leg, right leg
    LimbStyle style;
    double initial_yaw = 0.0;
    double ground_tilt = 0.0;            // angle between ground normal and +z
    double tilt_direction = 0.0;         // azimuth of the tilt axis
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    double glide_speed = 0.15;           // meters/frame, starting along the initial facing
    double glide_curvature = 0.05;       // heading change per frame, radians
    double noise = 0.0;                  // joint noise std, meters
    double fps = 30.0;
    std::uint64_t seed = 0;              // drives the noise only

    void validate() const;
};

struct GeneratedMotion {
    PoseSequence3D sequence;  // with noise
    PoseSequence3D clean;     // same motion without noise
    Plane ground;
    std::vector<double> yaw;           // body heading per frame
    std::vector<double> facing_angle;  // rotation facing alignment should apply, wrap(-yaw)
    std::vector<bool> airborne;
};

// Kinematic 17-joint figure: ballistic root arc, constant yaw rate and a
// class-dependent arm/leg pattern while airborne.
GeneratedMotion generate_motion(const MotionSpec& spec);

std::size_t synth_pattern_count() noexcept;
std::string synth_class_name(std::size_t class_id);

// Random per-instance spec for a class. Rotation count (and so yaw rate)
// grows with the class id.
// `style_spread` in [0, 1] scales the per-motion limb style ranges: 1 gives
// the widest pose variety, 0 leaves only the class pattern and oscillation.
MotionSpec sample_motion_spec(std::size_t class_id, std::size_t frames, double noise, Rng& rng,
                              double style_spread = 1.0);

struct SynthConfig {
    std::size_t classes = 3;
    std::size_t n_per_class = 10;  // motions per class, before the split
    double test_fraction = 0.5;
    std::size_t frames = 32;
    std::size_t pool_size = 2000;  // canonical poses for pre-training
    double style_spread = 0.3;       // labeled motions
    double pool_style_spread = 1.0;  // pre-training pool
    bool restore_heading = true;     // labeled sequences keep their spin
    double noise = 0.005;
    RansacConfig ransac;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthDataset {
    LabeledSequenceDataset train;
    LabeledSequenceDataset test;
    std::vector<CanonicalPose> pool;
    std::vector<PoseSequence3D> motions;  // every labeled motion, train then test
};

// Every item is one motion, canonicalized and rendered from its own random
// camera; the split is stratified and disjoint by motion.
SynthDataset generate_dataset(const SynthConfig& cfg);

// One random frame from each of `count` fresh motions of random classes.
std::vector<CanonicalPose> generate_pose_pool(std::size_t count, std::size_t classes, std::size_t frames, double noise,
                                              const RansacConfig& ransac, std::uint64_t seed,
                                              double style_spread = 1.0);

// Projects every pose from one camera and rescales each frame. With
// `restore_heading` each frame is first rotated back by its facing angle, so
// the figure turns in the image the way a filmed skater does.
LabeledSequence render_sequence(const CanonicalSequence& seq, const VirtualCamera& cam, std::string id,
                                std::size_t label, bool restore_heading = false);

void to_json(nlohmann::json& j, const MotionSpec& spec);
void from_json(const nlohmann::json& j, MotionSpec& spec);
void to_json(nlohmann::json& j, const SynthConfig& cfg);
void from_json(const nlohmann::json& j, SynthConfig& cfg);

}  // namespace skatepose
