#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace skatepose {

enum class JumpType { Axel, Salchow, ToeLoop, Loop, Flip, Lutz };

inline constexpr std::array<JumpType, 6> kJumpTypes = {JumpType::Axel, JumpType::Salchow, JumpType::ToeLoop,
                                                       JumpType::Loop, JumpType::Flip,    JumpType::Lutz};

std::string_view to_string(JumpType type) noexcept;

enum class Phase { None, Entry, Jump, Landing };

enum class SchemaLevel { Set, Element };

std::string_view to_string(SchemaLevel level) noexcept;
SchemaLevel parse_schema_level(std::string_view name);

// One frame label. `type` is meaningful for Entry and Jump, `rotations` only
// for Element-level Jump labels (0 elsewhere). Use the factories so unused
// fields stay at their defaults and equality stays structural.
struct ActionLabel {
    Phase phase = Phase::None;
    JumpType type = JumpType::Axel;
    int rotations = 0;

    static ActionLabel none() { return {}; }
    static ActionLabel entry(JumpType t) { return {Phase::Entry, t, 0}; }
    static ActionLabel jump(JumpType t, int rotations = 0) { return {Phase::Jump, t, rotations}; }
    static ActionLabel landing() { return {Phase::Landing, JumpType::Axel, 0}; }

    bool is_none() const noexcept { return phase == Phase::None; }
    friend bool operator==(const ActionLabel&, const ActionLabel&) = default;
};

// Grammar: `<rot?><Type>_<phase>`, e.g. `Axel_entry`, `Lutz_jump`,
// `3Lutz_jump`, plus `landing` and `NONE`.
std::string to_string(const ActionLabel& label);
ActionLabel parse_action_label(std::string_view text);

struct SchemaOptions {
    int max_rotations = 4;
    bool exclude_quad_axel = true;
};

// Non-None labels in a stable order: entries, jumps (by type, then
// rotations), landing. Set: 13 labels; Element: 30 labels.
std::vector<ActionLabel> build_label_schema(SchemaLevel level, const SchemaOptions& opts = {});

// Classifier vocabulary: NONE at index 0 followed by build_label_schema.
std::vector<ActionLabel> class_list(SchemaLevel level, const SchemaOptions& opts = {});

bool is_valid_label(const ActionLabel& label, SchemaLevel level, const SchemaOptions& opts = {});

struct LabeledTimeline {
    std::string video_id;
    std::vector<ActionLabel> labels;
    SchemaLevel level = SchemaLevel::Set;

    std::size_t size() const noexcept { return labels.size(); }
    // Throws Error(Validation) for an empty timeline or a label outside the level.
    void validate(const SchemaOptions& opts = {}) const;
};

// Frames [start, end).
struct Segment {
    std::size_t start = 0;
    std::size_t end = 0;
    ActionLabel label;

    std::size_t length() const noexcept { return end - start; }
    friend bool operator==(const Segment&, const Segment&) = default;
};

// Maximal runs of equal labels.
std::vector<Segment> segments_from_frames(const LabeledTimeline& timeline);
std::vector<Segment> segments_from_frames(const std::vector<ActionLabel>& labels);
// Inverse of segments_from_frames. Segments must tile [0, n) in order.
LabeledTimeline frames_from_segments(const std::vector<Segment>& segments, std::string video_id, SchemaLevel level);

enum class ViolationKind { MissingEntry, EntryTypeMismatch, MissingLanding, OrphanEntry, OrphanLanding };

std::string_view to_string(ViolationKind kind) noexcept;

struct Violation {
    ViolationKind kind;
    std::size_t segment = 0;  // index into segments_from_frames
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const Violation&, const Violation&) = default;
};

// Checks the entry -> jump -> landing procedure on the segment sequence:
// every jump is preceded by an entry of the same type and followed by a
// landing; every entry is followed by a jump and every landing preceded by one.
std::vector<Violation> validate_procedure(const LabeledTimeline& timeline);

// Entry and Landing frames become NONE; Jump frames are kept.
LabeledTimeline coarsen_annotation(const LabeledTimeline& timeline);

// Share of frames whose label is not NONE.
double action_frame_fraction(const LabeledTimeline& timeline);

// Frame-label file: one label string per line.
LabeledTimeline read_frame_labels(std::istream& in, std::string video_id, SchemaLevel level);
void write_frame_labels(std::ostream& out, const LabeledTimeline& timeline);
LabeledTimeline load_frame_labels(const std::filesystem::path& path, SchemaLevel level);
void save_frame_labels(const std::filesystem::path& path, const LabeledTimeline& timeline);

// Segment CSV with header `video_id,start,end,label`.
void write_segments_csv(std::ostream& out, const std::vector<LabeledTimeline>& timelines);

}  // namespace skatepose
