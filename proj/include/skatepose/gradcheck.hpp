#pragma once

#include "skatepose/model.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace skatepose {

// Finite-difference check of every trainable gradient: the contrastive
// objective through the encoder, and the classification loss through the
// classifier head and encoder. Dropout masks are replayed from a fixed seed
// so the loss is a deterministic function of the parameters.
struct GradientSuiteConfig {
    std::size_t batch = 8;
    std::size_t joints = 17;
    std::size_t d_pose = 12;
    std::size_t d_view = 4;
    std::vector<std::size_t> hidden{24};
    std::size_t frames = 6;
    std::size_t gru_hidden = 6;
    std::size_t fc_hidden = 8;
    std::size_t classes = 3;
    double step = 1e-5;
    double tolerance = 1e-4;
    // Denominator floor of the relative error, so entries whose true gradient
    // is zero are judged by absolute error.
    double abs_floor = 1e-6;
    std::uint64_t seed = 0;
};

struct GradientCheckEntry {
    std::string name;
    GradCheckReport report;
};

struct GradientSuiteReport {
    std::vector<GradientCheckEntry> checks;
    double max_relative_error = 0.0;
    bool passed = false;
};

GradientSuiteReport run_gradient_suite(const GradientSuiteConfig& cfg);

nlohmann::json to_json(const GradientSuiteReport& report);

}  // namespace skatepose
