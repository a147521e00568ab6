#include "skatepose/skeleton.hpp"

#include "skatepose/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#ifndef SKATEPOSE_DATA_DIR
#define SKATEPOSE_DATA_DIR "data"
#endif

namespace skatepose {

std::size_t Skeleton::root() const {
    for (std::size_t i = 0; i < parent.size(); ++i) {
        if (parent[i] == i) return i;
    }
    fail(ErrorKind::Validation, "skeleton '" + name + "' has no root joint");
}

std::optional<std::size_t> Skeleton::find(std::string_view joint) const {
    const auto it = std::find(joints.begin(), joints.end(), joint);
    if (it == joints.end()) return std::nullopt;
    return static_cast<std::size_t>(it - joints.begin());
}

void Skeleton::validate() const {
    const std::size_t n = joints.size();
    if (n == 0) fail(ErrorKind::Validation, "skeleton '" + name + "' has no joints");
    std::set<std::string> seen;
    for (const auto& j : joints) {
        if (!seen.insert(j).second) fail(ErrorKind::Validation, "duplicate joint name '" + j + "' in skeleton '" + name + "'");
    }
    const std::size_t landmarks[] = {left_hip, right_hip, chest, neck};
    for (std::size_t i = 0; i < 4; ++i) {
        if (landmarks[i] >= n) fail(ErrorKind::Validation, "landmark index out of range in skeleton '" + name + "'");
        for (std::size_t k = 0; k < i; ++k) {
            if (landmarks[i] == landmarks[k]) fail(ErrorKind::Validation, "landmark joints must be distinct in skeleton '" + name + "'");
        }
    }
    if (parent.size() != n) fail(ErrorKind::Validation, "parent array length mismatch in skeleton '" + name + "'");
    std::size_t roots = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (parent[i] >= n) fail(ErrorKind::Validation, "parent index out of range in skeleton '" + name + "'");
        if (parent[i] == i) ++roots;
    }
    if (roots != 1) fail(ErrorKind::Validation, "skeleton '" + name + "' must have exactly one root");
    // Every chain must reach the root within n steps (no cycles).
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i;
        std::size_t steps = 0;
        while (parent[j] != j) {
            j = parent[j];
            if (++steps > n) fail(ErrorKind::Validation, "parent array of skeleton '" + name + "' contains a cycle");
        }
    }
}

namespace {

Skeleton build(std::string name, const std::vector<std::pair<std::string, std::string>>& joints_with_parent,
               std::string_view lhip, std::string_view rhip, std::string_view chest, std::string_view neck) {
    Skeleton s;
    s.name = std::move(name);
    for (const auto& [j, p] : joints_with_parent) s.joints.push_back(j);
    for (const auto& [j, p] : joints_with_parent) s.parent.push_back(*s.find(p.empty() ? j : p));
    s.left_hip = *s.find(lhip);
    s.right_hip = *s.find(rhip);
    s.chest = *s.find(chest);
    s.neck = *s.find(neck);
    s.validate();
    return s;
}

Skeleton make_canonical17() {
    return build("canonical17",
                 {{"pelvis", ""},
                  {"right_hip", "pelvis"},
                  {"right_knee", "right_hip"},
                  {"right_ankle", "right_knee"},
                  {"left_hip", "pelvis"},
                  {"left_knee", "left_hip"},
                  {"left_ankle", "left_knee"},
                  {"spine", "pelvis"},
                  {"thorax", "spine"},
                  {"neck", "thorax"},
                  {"head", "neck"},
                  {"left_shoulder", "thorax"},
                  {"left_elbow", "left_shoulder"},
                  {"left_wrist", "left_elbow"},
                  {"right_shoulder", "thorax"},
                  {"right_elbow", "right_shoulder"},
                  {"right_wrist", "right_elbow"}},
                 "left_hip", "right_hip", "thorax", "neck");
}

Skeleton make_capture83() {
    std::vector<std::pair<std::string, std::string>> j = {
        // torso (14)
        {"pelvis", ""},
        {"sacrum", "pelvis"},
        {"left_asis", "pelvis"},
        {"right_asis", "pelvis"},
        {"left_psis", "pelvis"},
        {"right_psis", "pelvis"},
        {"spine_l3", "pelvis"},
        {"spine_t12", "spine_l3"},
        {"spine_t8", "spine_t12"},
        {"sternum", "spine_t8"},
        {"chest", "spine_t8"},
        {"c7", "chest"},
        {"neck", "c7"},
        {"clavicle_mid", "chest"},
        // head (13)
        {"head_center", "neck"},
        {"head_top", "head_center"},
        {"head_front", "head_center"},
        {"head_back", "head_center"},
        {"head_left", "head_center"},
        {"head_right", "head_center"},
        {"nose", "head_center"},
        {"chin", "head_center"},
        {"left_eye", "head_center"},
        {"right_eye", "head_center"},
        {"left_ear", "head_center"},
        {"right_ear", "head_center"},
        {"skull_base", "neck"},
    };
    for (const std::string side : {"left", "right"}) {
        const auto p = [&](const char* n) { return side + "_" + n; };
        // arm (13 per side)
        j.insert(j.end(), {{p("clavicle"), "clavicle_mid"},
                           {p("shoulder"), p("clavicle")},
                           {p("shoulder_front"), p("shoulder")},
                           {p("shoulder_back"), p("shoulder")},
                           {p("upper_arm"), p("shoulder")},
                           {p("elbow"), p("upper_arm")},
                           {p("elbow_medial"), p("elbow")},
                           {p("forearm"), p("elbow")},
                           {p("wrist"), p("forearm")},
                           {p("wrist_radial"), p("wrist")},
                           {p("wrist_ulnar"), p("wrist")},
                           {p("hand"), p("wrist")},
                           {p("finger_tip"), p("hand")}});
    }
    for (const std::string side : {"left", "right"}) {
        const auto p = [&](const char* n) { return side + "_" + n; };
        // leg (15 per side)
        j.insert(j.end(), {{p("hip"), "pelvis"},
                           {p("thigh_front"), p("hip")},
                           {p("thigh_lateral"), p("hip")},
                           {p("knee"), p("hip")},
                           {p("knee_medial"), p("knee")},
                           {p("knee_lateral"), p("knee")},
                           {p("shin"), p("knee")},
                           {p("calf"), p("knee")},
                           {p("ankle"), p("shin")},
                           {p("ankle_medial"), p("ankle")},
                           {p("heel"), p("ankle")},
                           {p("foot"), p("ankle")},
                           {p("toe"), p("foot")},
                           {p("blade_front"), p("foot")},
                           {p("blade_back"), p("heel")}});
    }
    return build("capture83", j, "left_hip", "right_hip", "chest", "neck");
}

struct Registry {
    std::mutex mutex;
    std::map<std::string, SkeletonPtr, std::less<>> by_name;

    Registry() {
        for (auto s : {make_canonical17(), make_capture83()}) {
            auto name = s.name;
            by_name.emplace(std::move(name), std::make_shared<const Skeleton>(std::move(s)));
        }
    }
};

Registry& registry() {
    static Registry r;
    return r;
}

}  // namespace

SkeletonPtr canonical17() {
    static const SkeletonPtr s = find_skeleton("canonical17");
    return s;
}

SkeletonPtr capture83() {
    static const SkeletonPtr s = find_skeleton("capture83");
    return s;
}

SkeletonPtr find_skeleton(std::string_view name) {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    const auto it = r.by_name.find(name);
    if (it == r.by_name.end()) fail(ErrorKind::Schema, "unknown skeleton '" + std::string(name) + "'");
    return it->second;
}

void register_skeleton(Skeleton skeleton) {
    skeleton.validate();
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    auto name = skeleton.name;
    r.by_name[name] = std::make_shared<const Skeleton>(std::move(skeleton));
}

void PoseSequence3D::validate() const {
    if (!skeleton) fail(ErrorKind::Validation, "pose sequence has no skeleton");
    if (frames.empty()) fail(ErrorKind::Validation, "pose sequence must contain at least one frame");
    const auto n = static_cast<Eigen::Index>(skeleton->joint_count());
    for (std::size_t t = 0; t < frames.size(); ++t) {
        if (frames[t].rows() != n) {
            fail(ErrorKind::Validation, "frame " + std::to_string(t) + " has " + std::to_string(frames[t].rows()) +
                                            " joints, skeleton '" + skeleton->name + "' has " + std::to_string(n));
        }
        if (!frames[t].allFinite()) fail(ErrorKind::Validation, "non-finite coordinate in frame " + std::to_string(t));
    }
    if (!(fps > 0.0) || !std::isfinite(fps)) fail(ErrorKind::Validation, "fps must be positive and finite");
}

bool operator==(const PoseSequence3D& a, const PoseSequence3D& b) {
    if (a.subject != b.subject || a.trial != b.trial || a.fps != b.fps) return false;
    if ((a.skeleton == nullptr) != (b.skeleton == nullptr)) return false;
    if (a.skeleton && !(*a.skeleton == *b.skeleton)) return false;
    if (a.frames.size() != b.frames.size()) return false;
    for (std::size_t t = 0; t < a.frames.size(); ++t) {
        if (a.frames[t].rows() != b.frames[t].rows() || a.frames[t] != b.frames[t]) return false;
    }
    return true;
}

void KeypointMap::validate() const {
    if (!source || !target) fail(ErrorKind::Validation, "keypoint map needs both source and target skeletons");
    if (rules.size() != target->joint_count()) {
        fail(ErrorKind::Validation, "keypoint map has " + std::to_string(rules.size()) + " rules for " +
                                        std::to_string(target->joint_count()) + " target joints");
    }
    const std::size_t n = source->joint_count();
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const auto& r = rules[i];
        const bool bad = (r.kind != RuleKind::Drop && r.a >= n) || (r.kind == RuleKind::Midpoint && r.b >= n);
        if (bad) fail(ErrorKind::Validation, "rule for '" + target->joints[i] + "' references a missing source joint");
        if (r.kind == RuleKind::Drop && i == target->root()) {
            fail(ErrorKind::Validation, "the target root joint cannot be dropped");
        }
    }
}

namespace {

std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

KeypointMap parse_keypoint_map(std::string_view text) {
    KeypointMap map;
    std::vector<std::optional<KeypointRule>> rules;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    const auto err = [&](const std::string& msg) {
        fail(ErrorKind::Parse, "keypoint map line " + std::to_string(line_no) + ": " + msg);
    };
    const auto source_index = [&](const std::string& joint) {
        const auto idx = map.source->find(joint);
        if (!idx) {
            fail(ErrorKind::Validation, "keypoint map line " + std::to_string(line_no) + ": unknown source joint '" +
                                            joint + "'");
        }
        return *idx;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "source" || tok[0] == "target" || tok[0] == "version") {
            if (tok.size() != 2) err("expected '" + tok[0] + " <value>'");
            if (tok[0] == "source") map.source = find_skeleton(tok[1]);
            if (tok[0] == "target") {
                map.target = find_skeleton(tok[1]);
                rules.assign(map.target->joint_count(), std::nullopt);
            }
            if (tok[0] == "version") map.version = tok[1];
            continue;
        }
        if (!map.source || !map.target) err("rules must follow the source and target declarations");
        if (tok.size() < 3 || tok[1] != "<-") err("expected '<target_joint> <- copy|mid|drop ...'");
        const auto target_idx = map.target->find(tok[0]);
        if (!target_idx) fail(ErrorKind::Validation, "keypoint map line " + std::to_string(line_no) + ": unknown target joint '" + tok[0] + "'");
        if (rules[*target_idx]) {
            fail(ErrorKind::Validation, "keypoint map line " + std::to_string(line_no) + ": second rule for '" + tok[0] + "'");
        }
        KeypointRule rule;
        if (tok[2] == "copy" && tok.size() == 4) {
            rule = {RuleKind::Copy, source_index(tok[3]), 0};
        } else if (tok[2] == "mid" && tok.size() == 5) {
            rule = {RuleKind::Midpoint, source_index(tok[3]), source_index(tok[4])};
        } else if (tok[2] == "drop" && tok.size() == 3) {
            rule = {RuleKind::Drop, 0, 0};
        } else {
            err("malformed rule '" + line + "'");
        }
        rules[*target_idx] = rule;
    }
    if (!map.source || !map.target) fail(ErrorKind::Parse, "keypoint map is missing its source/target declarations");
    for (std::size_t i = 0; i < rules.size(); ++i) {
        if (!rules[i]) fail(ErrorKind::Validation, "keypoint map has no rule for target joint '" + map.target->joints[i] + "'");
        map.rules.push_back(*rules[i]);
    }
    map.validate();
    return map;
}

KeypointMap load_keypoint_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open keypoint map '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_keypoint_map(buf.str());
}

std::string format_keypoint_map(const KeypointMap& map) {
    map.validate();
    std::ostringstream out;
    if (!map.version.empty()) out << "version " << map.version << '\n';
    out << "source " << map.source->name << '\n' << "target " << map.target->name << '\n';
    for (std::size_t i = 0; i < map.rules.size(); ++i) {
        const auto& r = map.rules[i];
        out << map.target->joints[i] << " <- ";
        switch (r.kind) {
            case RuleKind::Copy: out << "copy " << map.source->joints[r.a]; break;
            case RuleKind::Midpoint: out << "mid " << map.source->joints[r.a] << ' ' << map.source->joints[r.b]; break;
            case RuleKind::Drop: out << "drop"; break;
        }
        out << '\n';
    }
    return out.str();
}

KeypointMap identity_map(SkeletonPtr skeleton) {
    KeypointMap map;
    map.source = skeleton;
    map.target = skeleton;
    for (std::size_t i = 0; i < skeleton->joint_count(); ++i) map.rules.push_back({RuleKind::Copy, i, 0});
    return map;
}

PoseSequence3D remap_keypoints(const PoseSequence3D& seq, const KeypointMap& map) {
    map.validate();
    if (!seq.skeleton || !(*seq.skeleton == *map.source)) {
        fail(ErrorKind::Schema, "sequence skeleton '" + (seq.skeleton ? seq.skeleton->name : std::string("<none>")) +
                                    "' does not match keypoint map source '" + map.source->name + "'");
    }
    const auto& target = *map.target;
    const auto n_out = static_cast<Eigen::Index>(target.joint_count());
    const auto n_in = static_cast<Eigen::Index>(map.source->joint_count());

    // Dropped joints resolve to the nearest non-dropped ancestor.
    std::vector<std::size_t> resolved(target.joint_count());
    for (std::size_t i = 0; i < target.joint_count(); ++i) {
        std::size_t j = i;
        while (map.rules[j].kind == RuleKind::Drop) j = target.parent[j];
        resolved[i] = j;
    }

    PoseSequence3D out;
    out.skeleton = map.target;
    out.fps = seq.fps;
    out.subject = seq.subject;
    out.trial = seq.trial;
    out.frames.reserve(seq.frames.size());
    for (const auto& frame : seq.frames) {
        if (frame.rows() != n_in) fail(ErrorKind::Schema, "frame joint count does not match the source skeleton");
        Frame3 f(n_out, 3);
        for (Eigen::Index i = 0; i < n_out; ++i) {
            const auto& rule = map.rules[resolved[static_cast<std::size_t>(i)]];
            if (rule.kind == RuleKind::Copy) {
                f.row(i) = frame.row(static_cast<Eigen::Index>(rule.a));
            } else {
                f.row(i) = (frame.row(static_cast<Eigen::Index>(rule.a)) + frame.row(static_cast<Eigen::Index>(rule.b))) * 0.5;
            }
        }
        out.frames.push_back(std::move(f));
    }
    return out;
}

std::optional<KeypointMap> compose(const KeypointMap& ab, const KeypointMap& bc) {
    ab.validate();
    bc.validate();
    if (!(*ab.target == *bc.source)) fail(ErrorKind::Schema, "cannot compose maps: intermediate skeletons differ");
    KeypointMap ac;
    ac.source = ab.source;
    ac.target = bc.target;
    for (const auto& r : bc.rules) {
        if (r.kind == RuleKind::Drop) return std::nullopt;
        const auto& ra = ab.rules[r.a];
        if (ra.kind == RuleKind::Drop) return std::nullopt;
        if (r.kind == RuleKind::Copy) {
            ac.rules.push_back(ra);
            continue;
        }
        const auto& rb = ab.rules[r.b];
        if (rb.kind == RuleKind::Drop) return std::nullopt;
        if (ra.kind == RuleKind::Copy && rb.kind == RuleKind::Copy) {
            ac.rules.push_back({RuleKind::Midpoint, ra.a, rb.a});
        } else if (ra == rb) {
            ac.rules.push_back(ra);
        } else {
            return std::nullopt;
        }
    }
    return ac;
}

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("SKATEPOSE_DATA_DIR")) return env;
    return SKATEPOSE_DATA_DIR;
}

std::filesystem::path default_capture83_map_path() {
    return default_data_dir() / "keypoint_maps" / "capture83_to_canonical17.map";
}

}  // namespace skatepose
