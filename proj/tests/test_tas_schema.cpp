#include "support.hpp"

#include "skatepose/error.hpp"
#include "skatepose/tas_schema.hpp"

#include <doctest.h>

#include <sstream>

using namespace skatepose;
using skatepose::testing::random_timeline;

namespace {

std::size_t count_phase(const std::vector<ActionLabel>& labels, Phase p) {
    std::size_t n = 0;
    for (const auto& l : labels) n += l.phase == p;
    return n;
}

LabeledTimeline timeline(std::initializer_list<std::pair<ActionLabel, std::size_t>> runs,
                         SchemaLevel level = SchemaLevel::Set) {
    LabeledTimeline t{"t", {}, level};
    for (const auto& [l, n] : runs) t.labels.insert(t.labels.end(), n, l);
    return t;
}

std::vector<ActionLabel> vocabulary(SchemaLevel level) { return class_list(level); }

}  // namespace

TEST_CASE("schema sizes") {
    const auto set = build_label_schema(SchemaLevel::Set);
    const auto element = build_label_schema(SchemaLevel::Element);
    CHECK(set.size() == 13);
    CHECK(element.size() == 30);
    CHECK(count_phase(element, Phase::Jump) == 23);
    CHECK(count_phase(set, Phase::Entry) == 6);
    CHECK(count_phase(set, Phase::Jump) == 6);
    CHECK(count_phase(set, Phase::Landing) == 1);
    CHECK(count_phase(element, Phase::None) == 0);
    CHECK(std::find(element.begin(), element.end(), ActionLabel::jump(JumpType::Axel, 4)) == element.end());
    CHECK(std::find(element.begin(), element.end(), ActionLabel::jump(JumpType::Lutz, 4)) != element.end());
    CHECK(class_list(SchemaLevel::Set).size() == 14);
    CHECK(class_list(SchemaLevel::Element).size() == 31);
    CHECK(class_list(SchemaLevel::Element).front().is_none());
    CHECK(build_label_schema(SchemaLevel::Element) == element);

    SchemaOptions opts;
    opts.exclude_quad_axel = false;
    CHECK(build_label_schema(SchemaLevel::Element, opts).size() == 31);
}

TEST_CASE("label grammar round trip") {
    for (const auto level : {SchemaLevel::Set, SchemaLevel::Element}) {
        for (const auto& l : class_list(level)) {
            CHECK(parse_action_label(to_string(l)) == l);
            CHECK(is_valid_label(l, level));
        }
    }
    CHECK(to_string(ActionLabel::jump(JumpType::Lutz, 3)) == "3Lutz_jump");
    CHECK(to_string(ActionLabel::entry(JumpType::Axel)) == "Axel_entry");
    CHECK(to_string(ActionLabel::landing()) == "landing");
    CHECK(to_string(ActionLabel::none()) == "NONE");
    CHECK(parse_action_label("ToeLoop_jump") == ActionLabel::jump(JumpType::ToeLoop));
    for (const char* bad : {"", "3Lutz", "Lutz_spin", "2Axel_entry", "Waltz_jump", "33Lutz_jump"}) {
        CHECK_THROWS_AS(parse_action_label(bad), Error);
    }
    CHECK_FALSE(is_valid_label(ActionLabel::jump(JumpType::Axel, 4), SchemaLevel::Element));
    CHECK_FALSE(is_valid_label(ActionLabel::jump(JumpType::Axel, 2), SchemaLevel::Set));
    CHECK_FALSE(is_valid_label(ActionLabel::jump(JumpType::Axel), SchemaLevel::Element));
    CHECK(parse_schema_level("element") == SchemaLevel::Element);
    CHECK_THROWS_AS(parse_schema_level("coarse"), Error);
}

TEST_CASE("timeline validation") {
    LabeledTimeline empty{"e", {}, SchemaLevel::Set};
    CHECK_THROWS_AS(empty.validate(), Error);
    auto t = timeline({{ActionLabel::jump(JumpType::Lutz, 3), 2}}, SchemaLevel::Set);
    CHECK_THROWS_AS(t.validate(), Error);
    t.level = SchemaLevel::Element;
    CHECK_NOTHROW(t.validate());
}

TEST_CASE("segments_from_frames examples") {
    const auto none = timeline({{ActionLabel::none(), 100}});
    const auto s = segments_from_frames(none);
    REQUIRE(s.size() == 1);
    CHECK(s[0] == Segment{0, 100, ActionLabel::none()});

    const auto a = ActionLabel::jump(JumpType::Axel), b = ActionLabel::landing();
    const auto abba = segments_from_frames(std::vector<ActionLabel>{a, a, b, b, b, a});
    REQUIRE(abba.size() == 3);
    CHECK(abba[0] == Segment{0, 2, a});
    CHECK(abba[1] == Segment{2, 5, b});
    CHECK(abba[2] == Segment{5, 6, a});

    CHECK_THROWS_AS(frames_from_segments({{0, 2, a}, {3, 5, b}}, "gap", SchemaLevel::Set), Error);
}

TEST_CASE("segments round trip and coarsening properties on random timelines") {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const auto level = trial % 2 ? SchemaLevel::Element : SchemaLevel::Set;
        const auto t = random_timeline(level, 1 + rng.index(20), 15, rng, vocabulary(level));
        const auto segs = segments_from_frames(t);
        for (std::size_t i = 0; i < segs.size(); ++i) {
            CHECK(segs[i].start < segs[i].end);
            if (i > 0) {
                CHECK(segs[i].start == segs[i - 1].end);
                CHECK_FALSE(segs[i].label == segs[i - 1].label);
            }
        }
        const auto back = frames_from_segments(segs, t.video_id, t.level);
        CHECK(back.labels == t.labels);
        CHECK(back.level == t.level);

        const auto c = coarsen_annotation(t);
        CHECK(coarsen_annotation(c).labels == c.labels);
        CHECK(action_frame_fraction(c) <= action_frame_fraction(t));
        CHECK(count_phase(c.labels, Phase::Entry) + count_phase(c.labels, Phase::Landing) == 0);
        for (std::size_t i = 0; i < t.labels.size(); ++i) {
            if (t.labels[i].phase == Phase::Jump) CHECK(c.labels[i] == t.labels[i]);
        }
    }
}

TEST_CASE("validate_procedure examples") {
    const auto none = ActionLabel::none();
    const auto clean = timeline({{ActionLabel::entry(JumpType::Axel), 4},
                                 {ActionLabel::jump(JumpType::Axel), 3},
                                 {ActionLabel::landing(), 2},
                                 {none, 5}});
    CHECK(validate_procedure(clean).empty());

    // A trailing landing keeps the missing-landing rule out of this example.
    const auto no_entry = timeline({{none, 3}, {ActionLabel::jump(JumpType::Lutz), 3}, {ActionLabel::landing(), 2}});
    auto v = validate_procedure(no_entry);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == Violation{ViolationKind::MissingEntry, 1, 3, 6});

    const auto mismatch = timeline({{ActionLabel::entry(JumpType::Flip), 3},
                                    {ActionLabel::jump(JumpType::Lutz), 3},
                                    {ActionLabel::landing(), 2}});
    v = validate_procedure(mismatch);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == ViolationKind::EntryTypeMismatch);

    const auto orphans = timeline({{ActionLabel::landing(), 2}, {none, 2}, {ActionLabel::entry(JumpType::Loop), 2}});
    v = validate_procedure(orphans);
    REQUIRE(v.size() == 2);
    CHECK(v[0].kind == ViolationKind::OrphanLanding);
    CHECK(v[1].kind == ViolationKind::OrphanEntry);

    const auto no_landing = timeline({{ActionLabel::entry(JumpType::Loop), 2}, {ActionLabel::jump(JumpType::Loop), 2}});
    v = validate_procedure(no_landing);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == ViolationKind::MissingLanding);
}

TEST_CASE("coarsen examples and action fraction") {
    const auto none = timeline({{ActionLabel::none(), 10}});
    CHECK(coarsen_annotation(none).labels == none.labels);

    const auto jump = ActionLabel::jump(JumpType::Salchow);
    const auto t = timeline({{ActionLabel::none(), 10},
                             {ActionLabel::entry(JumpType::Salchow), 4},
                             {jump, 2},
                             {ActionLabel::landing(), 4}});
    const auto c = coarsen_annotation(t);
    CHECK(c.labels == timeline({{ActionLabel::none(), 14}, {jump, 2}, {ActionLabel::none(), 4}}).labels);
    CHECK(action_frame_fraction(t) == doctest::Approx(0.5));
    CHECK(action_frame_fraction(c) == doctest::Approx(0.1));
}

TEST_CASE("frame-label file round trip") {
    Rng rng(5);
    const auto t = random_timeline(SchemaLevel::Element, 12, 6, rng, vocabulary(SchemaLevel::Element));
    std::stringstream ss;
    write_frame_labels(ss, t);
    const auto back = read_frame_labels(ss, "random", SchemaLevel::Element);
    CHECK(back.labels == t.labels);

    const auto dir = skatepose::testing::temp_dir("frame_labels");
    save_frame_labels(dir / "v.txt", t);
    CHECK(load_frame_labels(dir / "v.txt", SchemaLevel::Element).labels == t.labels);
    CHECK_THROWS_AS(load_frame_labels(dir / "missing.txt", SchemaLevel::Element), Error);

    std::stringstream bad("NONE\nbogus\n");
    CHECK_THROWS_AS(read_frame_labels(bad, "bad", SchemaLevel::Set), Error);

    std::stringstream csv;
    write_segments_csv(csv, {timeline({{ActionLabel::none(), 2}, {ActionLabel::landing(), 3}})});
    CHECK(csv.str() == "video_id,start,end,label\nt,0,2,NONE\nt,2,5,landing\n");
}
