#include "skatepose/nn.hpp"

#include "skatepose/error.hpp"
#include "skatepose/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace skatepose::nn {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::Shape, what);
}

std::string shape_str(const Tensor& t) {
    std::string s = "(";
    for (std::size_t i = 0; i < t.shape.size(); ++i) s += (i ? "x" : "") + std::to_string(t.shape[i]);
    return s + ")";
}

Tensor affine_forward(const Tensor& w, const Tensor& b, const Tensor& x) {
    require(x.rank() == 2 && x.cols() == w.cols(),
            "affine input " + shape_str(x) + " does not match weight " + shape_str(w));
    const std::size_t rows = x.rows();
    const std::size_t out = w.rows();
    Tensor y = Tensor::matrix(rows, out);
    kernels::matmul_nt(x.data.data(), w.data.data(), y.data.data(), rows, out, w.cols(), false);
    for (std::size_t i = 0; i < rows; ++i) {
        double* yr = y.row(i);
        for (std::size_t o = 0; o < out; ++o) yr[o] += b[o];
    }
    return y;
}

Tensor affine_backward(const Tensor& w, const Tensor& x, const Tensor& dy, Tensor& gw, Tensor& gb) {
    require(dy.rows() == x.rows() && dy.cols() == w.rows(), "affine upstream gradient has the wrong shape");
    const std::size_t rows = x.rows();
    const std::size_t out = w.rows();
    const std::size_t in = w.cols();
    kernels::matmul_tn_acc(dy.data.data(), x.data.data(), gw.data.data(), rows, out, in);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* d = dy.row(i);
        for (std::size_t o = 0; o < out; ++o) gb[o] += d[o];
    }
    Tensor dx = Tensor::matrix(rows, in);
    kernels::matmul_nn_acc(dy.data.data(), w.data.data(), dx.data.data(), rows, out, in);
    return dx;
}

Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearParams p;
    p.weight = uniform_tensor({out, in}, bound, rng);
    p.bias = uniform_tensor({out}, bound, rng);
    return p;
}

Tensor linear_forward(const LinearParams& p, const Tensor& x) { return affine_forward(p.weight, p.bias, x); }

Tensor linear_backward(const LinearParams& p, const Tensor& x, const Tensor& dy, LinearParams& grad) {
    return affine_backward(p.weight, x, dy, grad.weight, grad.bias);
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    require(x.same_shape(dy), "relu gradient shape mismatch");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(x[i] > 0.0)) dx[i] = 0.0;
    }
    return dx;
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

GruCellParams init_gru_cell(std::size_t in, std::size_t hidden, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    GruCellParams p;
    p.w_x = uniform_tensor({3 * hidden, in}, bound, rng);
    p.w_h = uniform_tensor({3 * hidden, hidden}, bound, rng);
    p.b_x = uniform_tensor({3 * hidden}, bound, rng);
    p.b_h = uniform_tensor({3 * hidden}, bound, rng);
    return p;
}

namespace {

// Gates from a precomputed input projection gx (3H) and state h.
void gru_gates(const GruCellParams& p, const double* gx, const double* h, double* r, double* z, double* rh,
               double* hn, double* n, double* h_out) {
    const std::size_t hs = p.hidden();
    const auto dot = kernels::active().dot;
    for (std::size_t j = 0; j < hs; ++j) {
        r[j] = sigmoid(gx[j] + dot(p.w_h.row(j), h, hs) + p.b_h[j]);
        z[j] = sigmoid(gx[hs + j] + dot(p.w_h.row(hs + j), h, hs) + p.b_h[hs + j]);
    }
    for (std::size_t j = 0; j < hs; ++j) rh[j] = r[j] * h[j];
    for (std::size_t j = 0; j < hs; ++j) {
        hn[j] = dot(p.w_h.row(2 * hs + j), rh, hs) + p.b_h[2 * hs + j];
        n[j] = std::tanh(gx[2 * hs + j] + hn[j]);
        h_out[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
    }
}

}  // namespace

void gru_cell_step(const GruCellParams& p, const double* x, const double* h, double* h_out, double* r, double* z,
                   double* n) {
    const std::size_t hs = p.hidden();
    const std::size_t in = p.input();
    std::vector<double> gx(3 * hs);
    const auto dot = kernels::active().dot;
    for (std::size_t j = 0; j < 3 * hs; ++j) gx[j] = dot(p.w_x.row(j), x, in) + p.b_x[j];
    std::vector<double> rr(hs), zz(hs), nn(hs), rh(hs), hn(hs);
    gru_gates(p, gx.data(), h, rr.data(), zz.data(), rh.data(), hn.data(), nn.data(), h_out);
    if (r) std::copy(rr.begin(), rr.end(), r);
    if (z) std::copy(zz.begin(), zz.end(), z);
    if (n) std::copy(nn.begin(), nn.end(), n);
}

Tensor gru_run_forward(const GruCellParams& p, const Tensor& x, bool reverse, GruRunCache& cache) {
    require(x.rank() == 2 && x.rows() >= 1, "GRU input must be a non-empty T x F matrix");
    require(x.cols() == p.input(), "GRU input width " + std::to_string(x.cols()) + " does not match " +
                                       std::to_string(p.input()));
    const std::size_t steps = x.rows();
    const std::size_t hs = p.hidden();
    cache.gx = affine_forward(p.w_x, p.b_x, x);
    cache.hidden = Tensor::matrix(steps + 1, hs);
    cache.r = Tensor::matrix(steps, hs);
    cache.z = Tensor::matrix(steps, hs);
    cache.n = Tensor::matrix(steps, hs);
    cache.rh = Tensor::matrix(steps, hs);
    cache.hn = Tensor::matrix(steps, hs);
    cache.reverse = reverse;
    Tensor out = Tensor::matrix(steps, hs);
    for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t t = reverse ? steps - 1 - k : k;
        gru_gates(p, cache.gx.row(t), cache.hidden.row(k), cache.r.row(k), cache.z.row(k), cache.rh.row(k),
                  cache.hn.row(k), cache.n.row(k), cache.hidden.row(k + 1));
        std::copy_n(cache.hidden.row(k + 1), hs, out.row(t));
    }
    cache.valid = true;
    return out;
}

Tensor gru_run_backward(const GruCellParams& p, const Tensor& x, const GruRunCache& cache, const Tensor& dh,
                        GruCellParams& grad) {
    if (!cache.valid) fail(ErrorKind::State, "GRU backward called before forward");
    const std::size_t steps = x.rows();
    const std::size_t hs = p.hidden();
    require(dh.rows() == steps && dh.cols() == hs, "GRU upstream gradient has the wrong shape");
    const auto& kt = kernels::active();

    Tensor dgx = Tensor::matrix(steps, 3 * hs);
    std::vector<double> carry(hs, 0.0), dcur(hs), dprev(hs), drh(hs), dar(hs), daz(hs), dan(hs);
    for (std::size_t kk = steps; kk-- > 0;) {
        const std::size_t t = cache.reverse ? steps - 1 - kk : kk;
        const double* h = cache.hidden.row(kk);
        const double* r = cache.r.row(kk);
        const double* z = cache.z.row(kk);
        const double* n = cache.n.row(kk);
        const double* rh = cache.rh.row(kk);
        const double* up = dh.row(t);
        for (std::size_t j = 0; j < hs; ++j) {
            dcur[j] = up[j] + carry[j];
            const double dn = dcur[j] * (1.0 - z[j]);
            const double dz = dcur[j] * (h[j] - n[j]);
            dprev[j] = dcur[j] * z[j];
            dan[j] = dn * (1.0 - n[j] * n[j]);
            daz[j] = dz * z[j] * (1.0 - z[j]);
        }
        // Candidate path through Whn (r*h).
        std::fill(drh.begin(), drh.end(), 0.0);
        for (std::size_t j = 0; j < hs; ++j) {
            grad.b_h[2 * hs + j] += dan[j];
            if (dan[j] != 0.0) {
                kt.axpy(dan[j], rh, grad.w_h.row(2 * hs + j), hs);
                kt.axpy(dan[j], p.w_h.row(2 * hs + j), drh.data(), hs);
            }
        }
        for (std::size_t j = 0; j < hs; ++j) {
            const double dr = drh[j] * h[j];
            dprev[j] += drh[j] * r[j];
            dar[j] = dr * r[j] * (1.0 - r[j]);
        }
        for (std::size_t j = 0; j < hs; ++j) {
            grad.b_h[j] += dar[j];
            grad.b_h[hs + j] += daz[j];
            if (dar[j] != 0.0) {
                kt.axpy(dar[j], h, grad.w_h.row(j), hs);
                kt.axpy(dar[j], p.w_h.row(j), dprev.data(), hs);
            }
            if (daz[j] != 0.0) {
                kt.axpy(daz[j], h, grad.w_h.row(hs + j), hs);
                kt.axpy(daz[j], p.w_h.row(hs + j), dprev.data(), hs);
            }
        }
        double* g = dgx.row(t);
        std::copy(dar.begin(), dar.end(), g);
        std::copy(daz.begin(), daz.end(), g + hs);
        std::copy(dan.begin(), dan.end(), g + 2 * hs);
        carry.swap(dprev);
    }
    return affine_backward(p.w_x, x, dgx, grad.w_x, grad.b_x);
}

BiGruParams init_bigru(std::size_t in, std::size_t hidden, Rng& rng) {
    BiGruParams p;
    p.forward = init_gru_cell(in, hidden, rng);
    p.backward = init_gru_cell(in, hidden, rng);
    return p;
}

Tensor bigru_forward(const BiGruParams& p, const Tensor& x, BiGruCache& cache) {
    const Tensor f = gru_run_forward(p.forward, x, false, cache.forward);
    const Tensor b = gru_run_forward(p.backward, x, true, cache.backward);
    const std::size_t steps = x.rows();
    const std::size_t hs = p.forward.hidden();
    Tensor out = Tensor::matrix(steps, 2 * hs);
    for (std::size_t t = 0; t < steps; ++t) {
        std::copy_n(f.row(t), hs, out.row(t));
        std::copy_n(b.row(t), hs, out.row(t) + hs);
    }
    return out;
}

Tensor bigru_backward(const BiGruParams& p, const Tensor& x, const BiGruCache& cache, const Tensor& dy, BiGruParams& grad) {
    const std::size_t steps = x.rows();
    const std::size_t hs = p.forward.hidden();
    require(dy.rows() == steps && dy.cols() == 2 * hs, "BiGRU upstream gradient has the wrong shape");
    Tensor df = Tensor::matrix(steps, hs);
    Tensor db = Tensor::matrix(steps, hs);
    for (std::size_t t = 0; t < steps; ++t) {
        std::copy_n(dy.row(t), hs, df.row(t));
        std::copy_n(dy.row(t) + hs, hs, db.row(t));
    }
    Tensor dx = gru_run_backward(p.forward, x, cache.forward, df, grad.forward);
    const Tensor dxb = gru_run_backward(p.backward, x, cache.backward, db, grad.backward);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxb[i];
    return dx;
}

MaxPoolResult temporal_max_pool(const Tensor& x) {
    if (x.rank() != 2 || x.rows() == 0) fail(ErrorKind::Shape, "temporal max pooling needs a non-empty sequence");
    const std::size_t feats = x.cols();
    MaxPoolResult res{Tensor::vector(feats), std::vector<std::size_t>(feats, 0)};
    for (std::size_t f = 0; f < feats; ++f) res.pooled[f] = x(0, f);
    for (std::size_t t = 1; t < x.rows(); ++t) {
        const double* row = x.row(t);
        for (std::size_t f = 0; f < feats; ++f) {
            if (row[f] > res.pooled[f]) {
                res.pooled[f] = row[f];
                res.argmax[f] = t;
            }
        }
    }
    return res;
}

Tensor temporal_max_pool_backward(const MaxPoolResult& pool, std::size_t frames, const Tensor& dpooled) {
    const std::size_t feats = pool.argmax.size();
    require(dpooled.size() == feats, "max-pool upstream gradient has the wrong shape");
    Tensor dx = Tensor::matrix(frames, feats);
    for (std::size_t f = 0; f < feats; ++f) dx(pool.argmax[f], f) = dpooled[f];
    return dx;
}

Tensor dropout_mask(std::size_t n, double rate, bool train, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::Config, "dropout rate must lie in [0, 1)");
    Tensor mask = Tensor::vector(n, 1.0);
    if (!train || rate == 0.0) return mask;
    const double keep = 1.0 / (1.0 - rate);
    for (auto& m : mask.data) m = rng.bernoulli(rate) ? 0.0 : keep;
    return mask;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (auto& v : p) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    require(logits.rank() == 2 && logits.rows() == labels.size() && logits.rows() > 0,
            "cross entropy needs B x C logits with B labels");
    const std::size_t batch = logits.rows();
    const std::size_t classes = logits.cols();
    CrossEntropyResult res{0.0, Tensor::matrix(batch, classes)};
    for (std::size_t b = 0; b < batch; ++b) {
        if (labels[b] >= classes) {
            fail(ErrorKind::Validation, "label " + std::to_string(labels[b]) + " outside [0, " + std::to_string(classes) + ")");
        }
        const double* row = logits.row(b);
        const double mx = *std::max_element(row, row + classes);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
        const double lse = mx + std::log(sum);
        res.loss += lse - row[labels[b]];
        double* d = res.dlogits.row(b);
        for (std::size_t c = 0; c < classes; ++c) d[c] = std::exp(row[c] - lse) / static_cast<double>(batch);
        d[labels[b]] -= 1.0 / static_cast<double>(batch);
    }
    res.loss /= static_cast<double>(batch);
    return res;
}

}  // namespace skatepose::nn
