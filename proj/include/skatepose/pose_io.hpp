#pragma once

#include "skatepose/skeleton.hpp"

#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace skatepose {

enum class PoseFormat { Jsonl, Csv };

PoseFormat parse_pose_format(std::string_view name);
// Guesses from the extension: ".csv" -> Csv, anything else -> Jsonl.
PoseFormat pose_format_for(const std::filesystem::path& path);

// JSONL: one {"subject","trial","fps","skeleton","frames"} object per line.
// CSV:   header subject,trial,fps,skeleton,frame,joint,x,y,z; one row per joint.
std::vector<PoseSequence3D> read_pose_dataset(std::istream& in, PoseFormat format);
void write_pose_dataset(std::ostream& out, const std::vector<PoseSequence3D>& seqs, PoseFormat format);

std::vector<PoseSequence3D> load_pose_dataset(const std::filesystem::path& path, PoseFormat format);
void save_pose_dataset(const std::filesystem::path& path, const std::vector<PoseSequence3D>& seqs, PoseFormat format);

}  // namespace skatepose
