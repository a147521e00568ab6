#include "skatepose/tas_schema.hpp"

#include "skatepose/error.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace skatepose {

std::string_view to_string(JumpType type) noexcept {
    switch (type) {
        case JumpType::Axel: return "Axel";
        case JumpType::Salchow: return "Salchow";
        case JumpType::ToeLoop: return "ToeLoop";
        case JumpType::Loop: return "Loop";
        case JumpType::Flip: return "Flip";
        case JumpType::Lutz: return "Lutz";
    }
    return "?";
}

std::string_view to_string(SchemaLevel level) noexcept { return level == SchemaLevel::Set ? "set" : "element"; }

SchemaLevel parse_schema_level(std::string_view name) {
    if (name == "set" || name == "Set") return SchemaLevel::Set;
    if (name == "element" || name == "Element") return SchemaLevel::Element;
    fail(ErrorKind::Parse, "unknown schema level '" + std::string(name) + "' (expected set or element)");
}

std::string to_string(const ActionLabel& label) {
    switch (label.phase) {
        case Phase::None: return "NONE";
        case Phase::Landing: return "landing";
        case Phase::Entry: return std::string(to_string(label.type)) + "_entry";
        case Phase::Jump: {
            std::string out = label.rotations > 0 ? std::to_string(label.rotations) : std::string();
            return out + std::string(to_string(label.type)) + "_jump";
        }
    }
    return "?";
}

ActionLabel parse_action_label(std::string_view text) {
    const auto bad = [&]() -> ActionLabel { fail(ErrorKind::Parse, "malformed action label '" + std::string(text) + "'"); };
    if (text == "NONE") return ActionLabel::none();
    if (text == "landing") return ActionLabel::landing();
    const auto us = text.rfind('_');
    if (us == std::string_view::npos) return bad();
    const std::string_view phase = text.substr(us + 1);
    std::string_view head = text.substr(0, us);
    int rotations = 0;
    if (!head.empty() && head.front() >= '1' && head.front() <= '9') {
        rotations = head.front() - '0';
        head.remove_prefix(1);
    }
    for (JumpType t : kJumpTypes) {
        if (head != to_string(t)) continue;
        if (phase == "entry" && rotations == 0) return ActionLabel::entry(t);
        if (phase == "jump") return ActionLabel::jump(t, rotations);
        return bad();
    }
    return bad();
}

namespace {

bool jump_allowed(JumpType t, int rotations, const SchemaOptions& opts) {
    if (rotations < 1 || rotations > opts.max_rotations) return false;
    return !(opts.exclude_quad_axel && t == JumpType::Axel && rotations == 4);
}

}  // namespace

std::vector<ActionLabel> build_label_schema(SchemaLevel level, const SchemaOptions& opts) {
    std::vector<ActionLabel> out;
    for (JumpType t : kJumpTypes) out.push_back(ActionLabel::entry(t));
    for (JumpType t : kJumpTypes) {
        if (level == SchemaLevel::Set) {
            out.push_back(ActionLabel::jump(t));
            continue;
        }
        for (int r = 1; r <= opts.max_rotations; ++r) {
            if (jump_allowed(t, r, opts)) out.push_back(ActionLabel::jump(t, r));
        }
    }
    out.push_back(ActionLabel::landing());
    return out;
}

std::vector<ActionLabel> class_list(SchemaLevel level, const SchemaOptions& opts) {
    std::vector<ActionLabel> out{ActionLabel::none()};
    const auto rest = build_label_schema(level, opts);
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

bool is_valid_label(const ActionLabel& label, SchemaLevel level, const SchemaOptions& opts) {
    switch (label.phase) {
        case Phase::None:
        case Phase::Landing: return label == ActionLabel{label.phase, JumpType::Axel, 0};
        case Phase::Entry: return label.rotations == 0;
        case Phase::Jump:
            return level == SchemaLevel::Set ? label.rotations == 0 : jump_allowed(label.type, label.rotations, opts);
    }
    return false;
}

void LabeledTimeline::validate(const SchemaOptions& opts) const {
    if (labels.empty()) fail(ErrorKind::Validation, "timeline '" + video_id + "' is empty");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!is_valid_label(labels[i], level, opts)) {
            fail(ErrorKind::Validation, "timeline '" + video_id + "' frame " + std::to_string(i) + ": label " +
                                            to_string(labels[i]) + " is not valid at " + std::string(to_string(level)) +
                                            " level");
        }
    }
}

std::vector<Segment> segments_from_frames(const std::vector<ActionLabel>& labels) {
    std::vector<Segment> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (out.empty() || !(out.back().label == labels[i])) {
            out.push_back({i, i + 1, labels[i]});
        } else {
            out.back().end = i + 1;
        }
    }
    return out;
}

std::vector<Segment> segments_from_frames(const LabeledTimeline& timeline) { return segments_from_frames(timeline.labels); }

LabeledTimeline frames_from_segments(const std::vector<Segment>& segments, std::string video_id, SchemaLevel level) {
    LabeledTimeline t{std::move(video_id), {}, level};
    for (const auto& s : segments) {
        if (s.start != t.labels.size() || s.end <= s.start) {
            fail(ErrorKind::Validation, "segments must tile the timeline without gaps or overlaps");
        }
        t.labels.insert(t.labels.end(), s.length(), s.label);
    }
    return t;
}

std::string_view to_string(ViolationKind kind) noexcept {
    switch (kind) {
        case ViolationKind::MissingEntry: return "missing-entry";
        case ViolationKind::EntryTypeMismatch: return "entry-type-mismatch";
        case ViolationKind::MissingLanding: return "missing-landing";
        case ViolationKind::OrphanEntry: return "orphan-entry";
        case ViolationKind::OrphanLanding: return "orphan-landing";
    }
    return "?";
}

std::vector<Violation> validate_procedure(const LabeledTimeline& timeline) {
    const auto segs = segments_from_frames(timeline);
    std::vector<Violation> out;
    const auto phase_at = [&](std::size_t i, std::ptrdiff_t step) {
        const auto j = static_cast<std::ptrdiff_t>(i) + step;
        if (j < 0 || j >= static_cast<std::ptrdiff_t>(segs.size())) return Phase::None;
        return segs[static_cast<std::size_t>(j)].label.phase;
    };
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const auto& s = segs[i];
        const auto add = [&](ViolationKind k) { out.push_back({k, i, s.start, s.end}); };
        switch (s.label.phase) {
            case Phase::Jump:
                if (phase_at(i, -1) != Phase::Entry) {
                    add(ViolationKind::MissingEntry);
                } else if (segs[i - 1].label.type != s.label.type) {
                    add(ViolationKind::EntryTypeMismatch);
                }
                if (phase_at(i, 1) != Phase::Landing) add(ViolationKind::MissingLanding);
                break;
            case Phase::Entry:
                if (phase_at(i, 1) != Phase::Jump) add(ViolationKind::OrphanEntry);
                break;
            case Phase::Landing:
                if (phase_at(i, -1) != Phase::Jump) add(ViolationKind::OrphanLanding);
                break;
            case Phase::None: break;
        }
    }
    return out;
}

LabeledTimeline coarsen_annotation(const LabeledTimeline& timeline) {
    LabeledTimeline out = timeline;
    for (auto& l : out.labels) {
        if (l.phase == Phase::Entry || l.phase == Phase::Landing) l = ActionLabel::none();
    }
    return out;
}

double action_frame_fraction(const LabeledTimeline& timeline) {
    if (timeline.labels.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& l : timeline.labels) n += l.is_none() ? 0 : 1;
    return static_cast<double>(n) / static_cast<double>(timeline.labels.size());
}

LabeledTimeline read_frame_labels(std::istream& in, std::string video_id, SchemaLevel level) {
    LabeledTimeline t{std::move(video_id), {}, level};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            t.labels.push_back(parse_action_label(line));
        } catch (const Error& e) {
            fail(ErrorKind::Parse, "'" + t.video_id + "' line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    t.validate();
    return t;
}

void write_frame_labels(std::ostream& out, const LabeledTimeline& timeline) {
    for (const auto& l : timeline.labels) out << to_string(l) << '\n';
}

LabeledTimeline load_frame_labels(const std::filesystem::path& path, SchemaLevel level) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    return read_frame_labels(in, path.stem().string(), level);
}

void save_frame_labels(const std::filesystem::path& path, const LabeledTimeline& timeline) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    write_frame_labels(out, timeline);
}

void write_segments_csv(std::ostream& out, const std::vector<LabeledTimeline>& timelines) {
    out << "video_id,start,end,label\n";
    for (const auto& t : timelines) {
        for (const auto& s : segments_from_frames(t)) {
            out << t.video_id << ',' << s.start << ',' << s.end << ',' << to_string(s.label) << '\n';
        }
    }
}

}  // namespace skatepose
