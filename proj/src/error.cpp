#include "skatepose/error.hpp"

namespace skatepose {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Schema: return "schema";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Io: return "io";
        case ErrorKind::InsufficientData: return "insufficient-data";
        case ErrorKind::FitFailure: return "fit-failure";
        case ErrorKind::DegenerateFacing: return "degenerate-facing";
        case ErrorKind::Normalization: return "normalization";
        case ErrorKind::Projection: return "projection";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::State: return "state";
        case ErrorKind::BatchSize: return "batch-size";
        case ErrorKind::Config: return "config";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::UndefinedMetric: return "undefined-metric";
        case ErrorKind::Usage: return "usage";
    }
    return "unknown";
}

}  // namespace skatepose
