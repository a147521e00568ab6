#pragma once

#include "skatepose/rng.hpp"
#include "skatepose/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

// Differentiable building blocks. Parameters live in plain structs; gradient
// buffers are structs of the same type, so a forward pass never mutates the
// parameters and several backward passes can accumulate into separate
// gradient copies.
namespace skatepose::nn {

struct LinearParams {
    Tensor weight;  // out x in
    Tensor bias;    // out

    std::size_t in_features() const noexcept { return weight.cols(); }
    std::size_t out_features() const noexcept { return weight.rows(); }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "weight", weight);
        f(prefix + "bias", bias);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + "weight", weight);
        f(prefix + "bias", bias);
    }
};

// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng);

// y = x W^T + b for x of shape B x in.
Tensor linear_forward(const LinearParams& p, const Tensor& x);
// Accumulates dW, db into grad; returns dx.
Tensor linear_backward(const LinearParams& p, const Tensor& x, const Tensor& dy, LinearParams& grad);

Tensor relu(const Tensor& x);
// Subgradient 0 at x == 0.
Tensor relu_backward(const Tensor& x, const Tensor& dy);

double sigmoid(double x) noexcept;

// GRU with update (z), reset (r) and candidate (n) gates; the reset gate is
// applied to the hidden state before the candidate's recurrent affine:
//   r = s(Wxr x + bxr + Whr h + bhr)
//   z = s(Wxz x + bxz + Whz h + bhz)
//   n = tanh(Wxn x + bxn + Whn (r * h) + bhn)
//   h' = (1 - z) * n + z * h
// Gate blocks are stacked [r; z; n] along the 3H axis.
struct GruCellParams {
    Tensor w_x;  // 3H x in
    Tensor w_h;  // 3H x H
    Tensor b_x;  // 3H
    Tensor b_h;  // 3H

    std::size_t hidden() const noexcept { return w_h.cols(); }
    std::size_t input() const noexcept { return w_x.cols(); }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "w_x", w_x);
        f(prefix + "w_h", w_h);
        f(prefix + "b_x", b_x);
        f(prefix + "b_h", b_h);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + "w_x", w_x);
        f(prefix + "w_h", w_h);
        f(prefix + "b_x", b_x);
        f(prefix + "b_h", b_h);
    }
};

GruCellParams init_gru_cell(std::size_t in, std::size_t hidden, Rng& rng);

// One GRU step from hidden state h; the gate values are written to the
// optional outputs (each of length H).
void gru_cell_step(const GruCellParams& p, const double* x, const double* h, double* h_out, double* r = nullptr,
                   double* z = nullptr, double* n = nullptr);

struct GruRunCache {
    Tensor gx;      // T x 3H, input projections
    Tensor hidden;  // (T+1) x H in processing order, row 0 = initial state
    Tensor r, z, n, rh, hn;  // T x H in processing order; hn = Whn (r*h) + bhn
    bool reverse = false;
    bool valid = false;
};

// Runs the cell over x (T x in), forward or reversed in time. The returned
// hidden states are in time order (T x H).
Tensor gru_run_forward(const GruCellParams& p, const Tensor& x, bool reverse, GruRunCache& cache);
// dh: T x H in time order. Accumulates into grad; returns dx (T x in).
Tensor gru_run_backward(const GruCellParams& p, const Tensor& x, const GruRunCache& cache, const Tensor& dh,
                        GruCellParams& grad);

struct BiGruParams {
    GruCellParams forward;
    GruCellParams backward;

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        forward.visit(prefix + "fwd.", f);
        backward.visit(prefix + "bwd.", f);
    }
    template <class F>
    void visit(const std::string& prefix, F&& f) const {
        forward.visit(prefix + "fwd.", f);
        backward.visit(prefix + "bwd.", f);
    }
};

struct BiGruCache {
    GruRunCache forward;
    GruRunCache backward;
};

BiGruParams init_bigru(std::size_t in, std::size_t hidden, Rng& rng);
// T x in -> T x 2H, [forward | backward] per frame.
Tensor bigru_forward(const BiGruParams& p, const Tensor& x, BiGruCache& cache);
Tensor bigru_backward(const BiGruParams& p, const Tensor& x, const BiGruCache& cache, const Tensor& dy, BiGruParams& grad);

struct MaxPoolResult {
    Tensor pooled;                   // F
    std::vector<std::size_t> argmax;  // first index on ties
};

// Per-feature maximum over the rows of x (T x F).
MaxPoolResult temporal_max_pool(const Tensor& x);
Tensor temporal_max_pool_backward(const MaxPoolResult& pool, std::size_t frames, const Tensor& dpooled);

// Inverted dropout. The returned mask already carries the 1/(1-rate) factor;
// in evaluation mode (train == false) or rate == 0 the mask is all ones.
Tensor dropout_mask(std::size_t n, double rate, bool train, Rng& rng);

struct CrossEntropyResult {
    double loss = 0.0;
    Tensor dlogits;  // d(loss)/d(logits), B x C
};

// Mean over the batch of -log softmax(logits)[label].
CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace skatepose::nn
