#pragma once

#include "skatepose/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace skatepose {

// Binary layout:
//   8 bytes  magic "SKPCKPT1"
//   8 bytes  header length in bytes (little-endian u64)
//   header   UTF-8 JSON: {"kind", "tensors": [{"name", "shape"}], "config", "rng_state", ...}
//   payload  little-endian IEEE-754 doubles, tensors in header order
struct Checkpoint {
    nlohmann::json header = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[8] = {'S', 'K', 'P', 'C', 'K', 'P', 'T', '1'};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model checkpoints carry an encoder and, after fine-tuning, a classifier.
Checkpoint make_checkpoint(const EncoderParams& encoder, const ClassifierParams* classifier = nullptr,
                           const std::string& rng_state = {});
EncoderParams encoder_from_checkpoint(const Checkpoint& ckpt);
std::optional<ClassifierParams> classifier_from_checkpoint(const Checkpoint& ckpt);

}  // namespace skatepose
