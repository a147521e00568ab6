#pragma once

#include "skatepose/tensor.hpp"

#include <cstddef>
#include <iosfwd>

namespace skatepose {

struct LossConfig {
    double w_pose = 1.0;
    double w_view = 10.0;
    double w_reg = 1.0;
    double sigma_target_sq = 1.0;
    double bt_lambda = 5e-3;  // off-diagonal weight of the Barlow Twins term
    double epsilon = 1e-8;

    void validate() const;
};

struct LossTerms {
    double pose = 0.0;
    double view = 0.0;
    double var = 0.0;  // Var(z) + Var(z')
    double klu = 0.0;  // KLU(z) + KLU(z')
    double total = 0.0;
};

struct LossDiagnostics {
    std::size_t guarded_rows = 0;        // view rows whose norm hit epsilon
    std::size_t guarded_dimensions = 0;  // Barlow Twins dims whose std hit epsilon
    std::size_t clamped_values = 0;      // squashed values clamped in the KL term
};

// All losses take B x D batches. When a gradient pointer is given it is
// overwritten with d(loss)/d(input), same shape as the input.

// Per-dimension standardization over the batch (population variance, std
// floored at eps), C = A^T A' / B,
// loss = sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2.
double barlow_twins_loss(const Tensor& za, const Tensor& zb, double lambda, double eps = 1e-8, Tensor* grad_a = nullptr,
                         Tensor* grad_b = nullptr, LossDiagnostics* diag = nullptr);

// mean_b (cos(za_b, zb_b) - cos(va_b, vb_b))^2 with va, vb unit rows (B x 3).
double view_alignment_loss(const Tensor& za, const Tensor& zb, const Tensor& va, const Tensor& vb, double eps = 1e-8,
                           Tensor* grad_a = nullptr, Tensor* grad_b = nullptr, LossDiagnostics* diag = nullptr);

// (1/D) sum_i (var_i(z) - target)^2, population variance over the batch.
double variance_loss(const Tensor& z, double sigma_target_sq, Tensor* grad = nullptr);

// Mean over the batch of (1/D) sum_i s ln s + (1 - s) ln(1 - s) with
// s = clamp(sigmoid(z), eps, 1 - eps).
double kl_uniform_loss(const Tensor& z, double eps = 1e-8, Tensor* grad = nullptr, LossDiagnostics* diag = nullptr);

struct TotalLoss {
    LossTerms terms;
    Tensor grad_anchor;
    Tensor grad_positive;
    LossDiagnostics diagnostics;
};

// w_pose * BT(z_pose, z'_pose) + w_view * View(z_view, z'_view, v, v')
//   + w_reg * (Var(z) + Var(z') + KLU(z) + KLU(z')).
// The first d_pose columns of each embedding are z_pose, the rest z_view.
TotalLoss total_loss(const Tensor& z_anchor, const Tensor& z_positive, const Tensor& v_anchor, const Tensor& v_positive,
                     std::size_t d_pose, const LossConfig& cfg, bool want_grad = true);

// Column slice [begin, begin + count) of a B x D matrix.
Tensor column_slice(const Tensor& m, std::size_t begin, std::size_t count);

// Per-step training log: step,L_pose,L_view,L_var,L_klu,L_total.
void write_loss_csv_header(std::ostream& out);
void write_loss_csv_row(std::ostream& out, std::size_t step, const LossTerms& terms);

}  // namespace skatepose
