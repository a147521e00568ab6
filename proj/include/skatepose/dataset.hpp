#pragma once

#include "skatepose/camera.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace skatepose {

struct LabeledSequence {
    std::string id;
    std::size_t label = 0;
    std::vector<Pose2D> frames;
};

struct LabeledSequenceDataset {
    std::vector<std::string> class_names;
    std::vector<LabeledSequence> items;

    std::size_t num_classes() const noexcept { return class_names.size(); }
    std::size_t joint_count() const;
    std::vector<std::size_t> class_counts() const;
    // Labels in range, sequences non-empty, one joint count throughout.
    void validate() const;
};

// One item per line: {"id", "label", "frames": T x N x 2}. The class count
// is the larger of `num_classes` and max label + 1.
void write_labeled_jsonl(std::ostream& out, const LabeledSequenceDataset& data);
LabeledSequenceDataset read_labeled_jsonl(std::istream& in, std::size_t num_classes = 0);
void save_labeled_jsonl(const std::filesystem::path& path, const LabeledSequenceDataset& data);
LabeledSequenceDataset load_labeled_jsonl(const std::filesystem::path& path, std::size_t num_classes = 0);

// Raw coordinates of a whole sequence, T * 2N values (frame-major).
std::vector<double> flatten_sequence(const LabeledSequence& seq);

// Classifies each test item by the nearest class mean of flattened training
// sequences (all items must share T and N). Returns the accuracy in [0, 1].
double nearest_centroid_accuracy(const LabeledSequenceDataset& train, const LabeledSequenceDataset& test);

}  // namespace skatepose
