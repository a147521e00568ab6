#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace skatepose::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs one subcommand. `args` excludes the program name. Every successful
// run writes <out>/manifest.json holding the resolved configuration, input
// and output paths with SHA-256 checksums, seed, thread count, kernel backend
// and wall-clock duration. `rerun <manifest>` repeats a run from that file.
// Returns 0 on success, 1 on a library error and 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace skatepose::cli
