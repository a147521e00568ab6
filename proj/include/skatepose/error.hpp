#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skatepose {

enum class ErrorKind {
    Schema,
    Validation,
    Parse,
    Io,
    InsufficientData,
    FitFailure,
    DegenerateFacing,
    Normalization,
    Projection,
    Shape,
    State,
    BatchSize,
    Config,
    Divergence,
    UndefinedMetric,
    Usage,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a category so the CLI can map
// it onto an exit code and a stable message prefix.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace skatepose
