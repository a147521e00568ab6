#include "skatepose/synth.hpp"

#include "skatepose/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace skatepose {

namespace {

constexpr double kPi = std::numbers::pi;

constexpr double deg(double d) { return d * kPi / 180.0; }

// Body frame: left is +x, forward is -y, up is +z, pelvis at the origin.
constexpr double kHipHalfWidth = 0.1;
constexpr double kThigh = 0.45;
constexpr double kShin = 0.45;
constexpr double kShoulderHalfWidth = 0.18;
constexpr double kUpperArm = 0.3;
constexpr double kForearm = 0.28;

struct LimbAngles {
    std::array<double, 2> arm_azimuth{};
    std::array<double, 2> arm_elevation{};
    std::array<double, 2> elbow{};
    std::array<double, 2> hip_flexion{};
    std::array<double, 2> knee{};
    std::array<double, 2> leg_abduction{};
    double torso_lean = 0.0;
    double torso_side = 0.0;
    double torso_twist = 0.0;
};

struct Pattern {
    const char* name;
    LimbAngles air;
};

// Airborne arm configurations. The classes differ mostly in the horizontal
// direction of the arms, which a single 2D view only partly reveals.
const Pattern kPatterns[] = {
    {"arms_forward", {{deg(80), deg(80)}, {deg(20), deg(20)}, {deg(10), deg(10)}, {0, 0}, {deg(10), deg(10)}}},
    {"arms_side", {{deg(0), deg(0)}, {deg(-15), deg(-15)}, {deg(10), deg(10)}, {0, 0}, {deg(10), deg(10)}}},
    {"arms_split", {{deg(80), deg(0)}, {deg(20), deg(-15)}, {deg(10), deg(10)}, {0, 0}, {deg(10), deg(10)}}},
    {"arms_up", {{deg(30), deg(30)}, {deg(70), deg(70)}, {deg(10), deg(10)}, {0, 0}, {deg(10), deg(10)}}},
    {"arms_back", {{deg(-50), deg(-50)}, {deg(-10), deg(-10)}, {deg(10), deg(10)}, {0, 0}, {deg(10), deg(10)}}},
    {"arms_crossed", {{deg(115), deg(115)}, {deg(0), deg(0)}, {deg(60), deg(60)}, {0, 0}, {deg(10), deg(10)}}},
};

const LimbAngles kGrounded{{deg(20), deg(20)}, {deg(-50), deg(-50)}, {deg(20), deg(20)}, {0, 0}, {deg(20), deg(20)}};

Eigen::Vector3d arm_direction(double side, double azimuth, double elevation) {
    return {side * std::cos(elevation) * std::cos(azimuth), -std::cos(elevation) * std::sin(azimuth),
            std::sin(elevation)};
}

Eigen::Vector3d leg_direction(double side, double flexion, double abduction) {
    return {side * std::sin(abduction), -std::sin(flexion) * std::cos(abduction), -std::cos(flexion) * std::cos(abduction)};
}

Frame3 body_pose(const LimbAngles& a) {
    namespace cj = canonical_joint;
    Frame3 f = Frame3::Zero(cj::count, 3);
    const auto set = [&](std::size_t j, const Eigen::Vector3d& p) { f.row(static_cast<Eigen::Index>(j)) = p.transpose(); };
    // Upper body pivots about the pelvis; forward is -y.
    const Eigen::Matrix3d upper = (Eigen::AngleAxisd(a.torso_lean, Eigen::Vector3d::UnitX()) *
                                   Eigen::AngleAxisd(a.torso_side, Eigen::Vector3d::UnitY()) *
                                   Eigen::AngleAxisd(a.torso_twist, Eigen::Vector3d::UnitZ()))
                                      .toRotationMatrix();
    set(cj::pelvis, {0, 0, 0});
    set(cj::spine, upper * Eigen::Vector3d{0, 0, 0.2});
    set(cj::thorax, upper * Eigen::Vector3d{0, 0, 0.4});
    set(cj::neck, upper * Eigen::Vector3d{0, 0, 0.55});
    set(cj::head, upper * Eigen::Vector3d{0, -0.03, 0.72});
    const std::size_t hip[2] = {cj::left_hip, cj::right_hip};
    const std::size_t knee[2] = {cj::left_knee, cj::right_knee};
    const std::size_t ankle[2] = {cj::left_ankle, cj::right_ankle};
    const std::size_t shoulder[2] = {cj::left_shoulder, cj::right_shoulder};
    const std::size_t elbow[2] = {cj::left_elbow, cj::right_elbow};
    const std::size_t wrist[2] = {cj::left_wrist, cj::right_wrist};
    for (int s = 0; s < 2; ++s) {
        const double side = s == 0 ? 1.0 : -1.0;
        const Eigen::Vector3d h{side * kHipHalfWidth, 0, 0};
        const Eigen::Vector3d k = h + kThigh * leg_direction(side, a.hip_flexion[s], a.leg_abduction[s]);
        const Eigen::Vector3d an =
            k + kShin * leg_direction(side, a.hip_flexion[s] - a.knee[s], a.leg_abduction[s]);
        set(hip[s], h);
        set(knee[s], k);
        set(ankle[s], an);
        const Eigen::Vector3d sh = upper * Eigen::Vector3d{side * kShoulderHalfWidth, 0, 0.5};
        const Eigen::Vector3d el =
            sh + kUpperArm * (upper * arm_direction(side, a.arm_azimuth[s], a.arm_elevation[s]));
        const Eigen::Vector3d wr =
            el + kForearm * (upper * arm_direction(side, a.arm_azimuth[s] + a.elbow[s], a.arm_elevation[s]));
        set(shoulder[s], sh);
        set(elbow[s], el);
        set(wrist[s], wr);
    }
    return f;
}

double smoothstep(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

Eigen::Matrix3d tilt_rotation(double tilt, double direction) {
    const Eigen::Vector3d axis{std::cos(direction), std::sin(direction), 0.0};
    return Eigen::AngleAxisd(tilt, axis).toRotationMatrix();
}

}  // namespace

void MotionSpec::validate() const {
    if (frames < 2) fail(ErrorKind::Config, "a motion needs at least 2 frames");
    if (!std::isfinite(angular_velocity)) fail(ErrorKind::Config, "angular velocity must be finite");
    if (!(apex_height >= 0.0)) fail(ErrorKind::Config, "apex height must be non-negative");
    if (!(airborne_fraction >= 0.0 && airborne_fraction <= 0.5)) {
        fail(ErrorKind::Config, "airborne fraction must lie in [0, 0.5]");
    }
    if (!(noise >= 0.0)) fail(ErrorKind::Config, "noise must be non-negative");
    if (!(std::abs(ground_tilt) < kPi / 4)) fail(ErrorKind::Config, "ground tilt must be below 45 degrees");
    if (!(fps > 0.0)) fail(ErrorKind::Config, "fps must be positive");
}

std::size_t synth_pattern_count() noexcept { return std::size(kPatterns); }

std::string synth_class_name(std::size_t class_id) {
    const std::size_t n = synth_pattern_count();
    std::string name = kPatterns[class_id % n].name;
    if (class_id >= n) name += "_" + std::to_string(1 + class_id / n) + "x";
    return name;
}

GeneratedMotion generate_motion(const MotionSpec& spec) {
    spec.validate();
    const std::size_t n = spec.frames;
    const std::size_t n_air = std::min(static_cast<std::size_t>(std::lround(spec.airborne_fraction * static_cast<double>(n))), n / 2);
    const std::size_t t0 = (n - n_air) / 2;
    const std::size_t t1 = t0 + n_air;
    const LimbAngles& air = kPatterns[spec.class_id % synth_pattern_count()].air;
    const double period = std::max(4.0, static_cast<double>(n) / 2.0);
    const double ramp = 3.0;

    const Eigen::Matrix3d tilt = tilt_rotation(spec.ground_tilt, spec.tilt_direction);
    GeneratedMotion out;
    out.ground.normal = tilt * Eigen::Vector3d::UnitZ();
    out.ground.offset = out.ground.normal.dot(spec.origin);
    out.clean.skeleton = canonical17();
    out.clean.fps = spec.fps;
    out.clean.subject = "synth";
    out.clean.trial = synth_class_name(spec.class_id);

    Eigen::Vector2d glide = Eigen::Vector2d::Zero();
    for (std::size_t t = 0; t < n; ++t) {
        const double td = static_cast<double>(t);
        // Airborne weight with short ramps around take-off and landing.
        double w = 0.0;
        if (n_air > 0) {
            if (t < t0) w = smoothstep(1.0 - (static_cast<double>(t0) - td) / ramp);
            else if (t >= t1) w = smoothstep(1.0 - (td - static_cast<double>(t1) + 1.0) / ramp);
            else w = 1.0;
        }
        LimbAngles a;
        const auto& st = spec.style;
        for (int s = 0; s < 2; ++s) {
            const double arm_osc = st.swing * std::sin(2 * kPi * td / period + spec.limb_phase[s]);
            const double leg_osc = st.swing * std::sin(2 * kPi * td / period + spec.limb_phase[2 + s]);
            const auto mix = [w](double g, double f) { return (1.0 - w) * g + w * f; };
            a.arm_azimuth[s] = mix(kGrounded.arm_azimuth[s], air.arm_azimuth[s]) + st.arm_azimuth[s] + arm_osc;
            a.arm_elevation[s] = mix(kGrounded.arm_elevation[s], air.arm_elevation[s]) + st.arm_elevation[s] + arm_osc;
            a.elbow[s] = mix(kGrounded.elbow[s], air.elbow[s]) + st.elbow[s];
            a.hip_flexion[s] = mix(kGrounded.hip_flexion[s], air.hip_flexion[s]) + (1.0 - w) * st.hip_flexion[s] + leg_osc;
            a.knee[s] = mix(kGrounded.knee[s], air.knee[s]) + (1.0 - w) * st.knee[s] + std::abs(leg_osc);
            a.leg_abduction[s] = (1.0 - w) * st.leg_abduction[s];
        }
        a.torso_lean = st.torso_lean + 0.5 * st.swing * std::sin(2 * kPi * td / period + spec.limb_phase[0]);
        a.torso_side = st.torso_side;
        a.torso_twist = st.torso_twist + 0.5 * st.swing * std::sin(2 * kPi * td / period + spec.limb_phase[1]);
        Frame3 body = body_pose(a);
        const double lowest = body.col(2).minCoeff();
        double height = -lowest;
        const bool up = t >= t0 && t < t1;
        if (up) {
            const double s = (td - static_cast<double>(t0) + 1.0) / static_cast<double>(n_air + 1);
            height += spec.apex_height * 4.0 * s * (1.0 - s);
        }
        const double yaw = spec.initial_yaw + spec.angular_velocity * td;
        const Eigen::Matrix3d rz = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
        // Glide along a gentle arc so the ground contacts span the plane.
        if (t > 0) {
            const double heading = spec.initial_yaw - kPi / 2 + spec.glide_curvature * td;
            glide += spec.glide_speed * Eigen::Vector2d(std::cos(heading), std::sin(heading));
        }
        const Eigen::Vector3d root{glide.x(), glide.y(), height};
        Frame3 world(body.rows(), 3);
        for (Eigen::Index j = 0; j < body.rows(); ++j) {
            const Eigen::Vector3d p = rz * body.row(j).transpose() + root;
            world.row(j) = (tilt * p + spec.origin).transpose();
        }
        out.clean.frames.push_back(std::move(world));
        out.yaw.push_back(yaw);
        out.facing_angle.push_back(wrap_angle(-yaw));
        out.airborne.push_back(up);
    }

    out.sequence = out.clean;
    if (spec.noise > 0.0) {
        Rng rng(spec.seed);
        for (auto& f : out.sequence.frames) {
            for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] += rng.normal(0.0, spec.noise);
        }
    }
    return out;
}

MotionSpec sample_motion_spec(std::size_t class_id, std::size_t frames, double noise, Rng& rng, double style_spread) {
    if (!(style_spread >= 0.0 && style_spread <= 1.0)) fail(ErrorKind::Config, "style spread must lie in [0, 1]");
    const double w = style_spread;
    MotionSpec s;
    s.class_id = class_id;
    s.frames = frames;
    s.noise = noise;
    s.airborne_fraction = rng.uniform(0.3, 0.45);
    s.apex_height = rng.uniform(0.3, 0.6);
    const double rotations = 1.0 + static_cast<double>(class_id % 4);
    const double air_frames = std::max(1.0, s.airborne_fraction * static_cast<double>(frames));
    s.angular_velocity = rotations * 2.0 * kPi / air_frames * rng.uniform(0.9, 1.1);
    for (auto& p : s.limb_phase) p = rng.uniform(0.0, 2.0 * kPi);
    auto& st = s.style;
    for (int k = 0; k < 2; ++k) {
        st.arm_azimuth[k] = w * rng.uniform(-deg(130), deg(130));
        st.arm_elevation[k] = w * rng.uniform(-deg(85), deg(85));
        st.elbow[k] = w * rng.uniform(0.0, deg(150));
        st.hip_flexion[k] = w * rng.uniform(-deg(45), deg(110));
        st.knee[k] = w * rng.uniform(0.0, deg(140));
    }
    st.swing = 0.05 + w * rng.uniform(0.0, 0.55);
    s.initial_yaw = rng.uniform_left_open(-kPi, kPi);
    s.ground_tilt = rng.uniform(0.0, 0.06);
    s.tilt_direction = rng.uniform(0.0, 2.0 * kPi);
    s.origin = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-0.2, 0.2)};
    s.glide_speed = rng.uniform(0.08, 0.2);
    s.glide_curvature = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 0.2);
    s.seed = rng.next_u64();
    return s;
}

void SynthConfig::validate() const {
    if (classes < 1 || n_per_class < 1) fail(ErrorKind::Config, "class and per-class counts must be at least 1");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) fail(ErrorKind::Config, "test fraction must lie in [0, 1)");
    if (frames < 2) fail(ErrorKind::Config, "sequences need at least 2 frames");
    if (!(noise >= 0.0)) fail(ErrorKind::Config, "noise must be non-negative");
    for (double w : {style_spread, pool_style_spread}) {
        if (!(w >= 0.0 && w <= 1.0)) fail(ErrorKind::Config, "style spreads must lie in [0, 1]");
    }
    ransac.validate();
}

LabeledSequence render_sequence(const CanonicalSequence& seq, const VirtualCamera& cam, std::string id,
                                std::size_t label, bool restore_heading) {
    LabeledSequence out{std::move(id), label, {}};
    out.frames.reserve(seq.poses.size());
    for (const auto& p : seq.poses) {
        const Frame3 coords = restore_heading ? rotate_facing(p.coords, *canonical17(), -p.facing_angle) : p.coords;
        out.frames.push_back(normalize_2d_scale(project_perspective(coords, cam)));
    }
    return out;
}

namespace {

CanonicalSequence canonical_motion(const GeneratedMotion& m, const RansacConfig& base, std::uint64_t seed) {
    RansacConfig rc = base;
    rc.seed = seed;
    return canonicalize_sequence(m.sequence, rc);
}

}  // namespace

std::vector<CanonicalPose> generate_pose_pool(std::size_t count, std::size_t classes, std::size_t frames, double noise,
                                              const RansacConfig& ransac, std::uint64_t seed,
                                              double style_spread) {
    if (classes < 1) fail(ErrorKind::Config, "pose pool needs at least one class");
    std::vector<CanonicalPose> pool;
    pool.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, i));
        const std::size_t c = rng.index(classes);
        const MotionSpec spec = sample_motion_spec(c, frames, noise, rng, style_spread);
        const auto seq = canonical_motion(generate_motion(spec), ransac, rng.next_u64());
        pool.push_back(seq.poses[rng.index(seq.poses.size())]);
    }
    return pool;
}

SynthDataset generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    SynthDataset out;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        const std::string name = synth_class_name(c);
        out.train.class_names.push_back(name);
        out.test.class_names.push_back(name);
    }
    std::vector<PoseSequence3D> test_motions;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        std::vector<std::size_t> order(cfg.n_per_class);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng split(derive_seed(cfg.seed, 0x5b117, c));
        split.shuffle(order.begin(), order.end());
        const auto n_test = static_cast<std::size_t>(std::lround(cfg.test_fraction * static_cast<double>(cfg.n_per_class)));
        std::vector<bool> is_test(cfg.n_per_class, false);
        for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;

        for (std::size_t i = 0; i < cfg.n_per_class; ++i) {
            Rng rng(derive_seed(cfg.seed, c, i));
            const MotionSpec spec = sample_motion_spec(c, cfg.frames, cfg.noise, rng, cfg.style_spread);
            GeneratedMotion m = generate_motion(spec);
            const std::string id = "c" + std::to_string(c) + "_m" + std::to_string(i);
            m.sequence.trial = id;
            const auto canon = canonical_motion(m, cfg.ransac, rng.next_u64());
            const VirtualCamera cam = sample_virtual_camera(rng);
            auto item = render_sequence(canon, cam, id, c, cfg.restore_heading);
            if (is_test[i]) {
                out.test.items.push_back(std::move(item));
                test_motions.push_back(std::move(m.sequence));
            } else {
                out.train.items.push_back(std::move(item));
                out.motions.push_back(std::move(m.sequence));
            }
        }
    }
    out.motions.insert(out.motions.end(), test_motions.begin(), test_motions.end());
    out.pool = generate_pose_pool(cfg.pool_size, cfg.classes, cfg.frames, cfg.noise, cfg.ransac,
                                  derive_seed(cfg.seed, 0x9001), cfg.pool_style_spread);
    return out;
}

void to_json(nlohmann::json& j, const MotionSpec& s) {
    j = {{"class_id", s.class_id},
         {"frames", s.frames},
         {"angular_velocity", s.angular_velocity},
         {"apex_height", s.apex_height},
         {"airborne_fraction", s.airborne_fraction},
         {"limb_phase", s.limb_phase},
         {"style",
          {{"arm_azimuth", s.style.arm_azimuth},
           {"arm_elevation", s.style.arm_elevation},
           {"elbow", s.style.elbow},
           {"hip_flexion", s.style.hip_flexion},
           {"knee", s.style.knee},
           {"leg_abduction", s.style.leg_abduction},
           {"torso_lean", s.style.torso_lean},
           {"torso_side", s.style.torso_side},
           {"torso_twist", s.style.torso_twist},
           {"swing", s.style.swing}}},
         {"initial_yaw", s.initial_yaw},
         {"ground_tilt", s.ground_tilt},
         {"tilt_direction", s.tilt_direction},
         {"origin", {s.origin.x(), s.origin.y(), s.origin.z()}},
         {"glide_speed", s.glide_speed},
         {"glide_curvature", s.glide_curvature},
         {"noise", s.noise},
         {"fps", s.fps},
         {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, MotionSpec& s) {
    s = MotionSpec{};
    const auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("class_id", s.class_id);
    get("frames", s.frames);
    get("angular_velocity", s.angular_velocity);
    get("apex_height", s.apex_height);
    get("airborne_fraction", s.airborne_fraction);
    get("limb_phase", s.limb_phase);
    if (j.contains("style")) {
        const auto& st = j.at("style");
        const auto sget = [&](const char* key, auto& field) {
            if (st.contains(key)) st.at(key).get_to(field);
        };
        sget("arm_azimuth", s.style.arm_azimuth);
        sget("arm_elevation", s.style.arm_elevation);
        sget("elbow", s.style.elbow);
        sget("hip_flexion", s.style.hip_flexion);
        sget("knee", s.style.knee);
        sget("leg_abduction", s.style.leg_abduction);
        sget("torso_lean", s.style.torso_lean);
        sget("torso_side", s.style.torso_side);
        sget("torso_twist", s.style.torso_twist);
        sget("swing", s.style.swing);
    }
    get("initial_yaw", s.initial_yaw);
    get("ground_tilt", s.ground_tilt);
    get("tilt_direction", s.tilt_direction);
    if (j.contains("origin")) {
        const auto o = j.at("origin").get<std::array<double, 3>>();
        s.origin = {o[0], o[1], o[2]};
    }
    get("glide_speed", s.glide_speed);
    get("glide_curvature", s.glide_curvature);
    get("noise", s.noise);
    get("fps", s.fps);
    get("seed", s.seed);
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = {{"classes", c.classes},
         {"n_per_class", c.n_per_class},
         {"test_fraction", c.test_fraction},
         {"frames", c.frames},
         {"pool_size", c.pool_size},
         {"style_spread", c.style_spread},
         {"pool_style_spread", c.pool_style_spread},
         {"restore_heading", c.restore_heading},
         {"noise", c.noise},
         {"ransac",
          {{"iterations", c.ransac.iterations},
           {"inlier_threshold", c.ransac.inlier_threshold},
           {"contact_fraction", c.ransac.contact_fraction},
           {"seed", c.ransac.seed}}},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    c = SynthConfig{};
    const auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("classes", c.classes);
    get("n_per_class", c.n_per_class);
    get("test_fraction", c.test_fraction);
    get("frames", c.frames);
    get("pool_size", c.pool_size);
    get("style_spread", c.style_spread);
    get("pool_style_spread", c.pool_style_spread);
    get("restore_heading", c.restore_heading);
    get("noise", c.noise);
    get("seed", c.seed);
    if (j.contains("ransac")) {
        const auto& r = j.at("ransac");
        if (r.contains("iterations")) r.at("iterations").get_to(c.ransac.iterations);
        if (r.contains("inlier_threshold")) r.at("inlier_threshold").get_to(c.ransac.inlier_threshold);
        if (r.contains("contact_fraction")) r.at("contact_fraction").get_to(c.ransac.contact_fraction);
        if (r.contains("seed")) r.at("seed").get_to(c.ransac.seed);
    }
}

}  // namespace skatepose
