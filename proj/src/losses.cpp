#include "skatepose/losses.hpp"

#include "skatepose/error.hpp"
#include "skatepose/nn.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace skatepose {

void LossConfig::validate() const {
    if (w_pose < 0.0 || w_view < 0.0 || w_reg < 0.0) fail(ErrorKind::Config, "loss weights must be non-negative");
    if (!(sigma_target_sq > 0.0)) fail(ErrorKind::Config, "sigma_target_sq must be positive");
    if (!(bt_lambda > 0.0)) fail(ErrorKind::Config, "bt_lambda must be positive");
    if (!(epsilon > 0.0)) fail(ErrorKind::Config, "epsilon must be positive");
}

namespace {

void require_batch(const Tensor& z, const char* what) {
    if (z.rank() != 2) fail(ErrorKind::Shape, std::string(what) + " expects a B x D matrix");
    if (z.rows() < 2) fail(ErrorKind::BatchSize, std::string(what) + " needs a batch of at least 2, got " + std::to_string(z.rows()));
}

struct Standardized {
    Tensor a;                // B x D
    std::vector<double> sd;  // effective divisor per dim
    std::vector<bool> floored;
};

Standardized standardize(const Tensor& z, double eps, LossDiagnostics* diag) {
    const std::size_t b = z.rows();
    const std::size_t d = z.cols();
    Standardized s{Tensor::matrix(b, d), std::vector<double>(d), std::vector<bool>(d, false)};
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < b; ++i) mean += z(i, j);
        mean /= static_cast<double>(b);
        double var = 0.0;
        for (std::size_t i = 0; i < b; ++i) var += (z(i, j) - mean) * (z(i, j) - mean);
        var /= static_cast<double>(b);
        double sd = std::sqrt(var);
        if (sd < eps) {
            sd = eps;
            s.floored[j] = true;
            if (diag) ++diag->guarded_dimensions;
        }
        s.sd[j] = sd;
        for (std::size_t i = 0; i < b; ++i) s.a(i, j) = (z(i, j) - mean) / sd;
    }
    return s;
}

// d(loss)/d(z) from d(loss)/d(a) through the standardization.
Tensor standardize_backward(const Standardized& s, const Tensor& da) {
    const std::size_t b = da.rows();
    const std::size_t d = da.cols();
    Tensor dz = Tensor::matrix(b, d);
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t j = 0; j < d; ++j) {
        double mean_da = 0.0;
        double mean_da_a = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            mean_da += da(i, j);
            mean_da_a += da(i, j) * s.a(i, j);
        }
        mean_da *= inv_b;
        mean_da_a *= inv_b;
        for (std::size_t i = 0; i < b; ++i) {
            const double centered = da(i, j) - mean_da;
            dz(i, j) = s.floored[j] ? centered / s.sd[j] : (centered - s.a(i, j) * mean_da_a) / s.sd[j];
        }
    }
    return dz;
}

}  // namespace

double barlow_twins_loss(const Tensor& za, const Tensor& zb, double lambda, double eps, Tensor* grad_a, Tensor* grad_b,
                         LossDiagnostics* diag) {
    require_batch(za, "barlow_twins_loss");
    require_batch(zb, "barlow_twins_loss");
    if (!za.same_shape(zb)) fail(ErrorKind::Shape, "barlow_twins_loss: batches differ in shape");
    const std::size_t b = za.rows();
    const std::size_t d = za.cols();
    const Standardized sa = standardize(za, eps, diag);
    const Standardized sb = standardize(zb, eps, diag);

    Tensor c = Tensor::matrix(d, d);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t p = 0; p < d; ++p) {
            const double ap = sa.a(i, p);
            for (std::size_t q = 0; q < d; ++q) c(p, q) += ap * sb.a(i, q);
        }
    }
    const double inv_b = 1.0 / static_cast<double>(b);
    double loss = 0.0;
    Tensor g = Tensor::matrix(d, d);  // d(loss)/d(C)
    for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t q = 0; q < d; ++q) {
            c(p, q) *= inv_b;
            if (p == q) {
                loss += (1.0 - c(p, q)) * (1.0 - c(p, q));
                g(p, q) = -2.0 * (1.0 - c(p, q));
            } else {
                loss += lambda * c(p, q) * c(p, q);
                g(p, q) = 2.0 * lambda * c(p, q);
            }
        }
    }
    if (grad_a || grad_b) {
        Tensor da = Tensor::matrix(b, d);
        Tensor db = Tensor::matrix(b, d);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t p = 0; p < d; ++p) {
                for (std::size_t q = 0; q < d; ++q) {
                    da(i, p) += inv_b * g(p, q) * sb.a(i, q);
                    db(i, q) += inv_b * g(p, q) * sa.a(i, p);
                }
            }
        }
        if (grad_a) *grad_a = standardize_backward(sa, da);
        if (grad_b) *grad_b = standardize_backward(sb, db);
    }
    return loss;
}

namespace {

struct CosineResult {
    double value = 0.0;
    std::vector<double> d_u;
    std::vector<double> d_w;
};

// Cosine with both norms floored at eps.
CosineResult cosine(const double* u, const double* w, std::size_t n, double eps, bool want_grad, std::size_t* guarded) {
    double uu = 0.0, ww = 0.0, uw = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        uu += u[k] * u[k];
        ww += w[k] * w[k];
        uw += u[k] * w[k];
    }
    double nu = std::sqrt(uu);
    double nw = std::sqrt(ww);
    const bool fu = nu < eps;
    const bool fw = nw < eps;
    if (guarded) *guarded += static_cast<std::size_t>(fu) + static_cast<std::size_t>(fw);
    if (fu) nu = eps;
    if (fw) nw = eps;
    CosineResult r;
    r.value = uw / (nu * nw);
    if (want_grad) {
        r.d_u.resize(n);
        r.d_w.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            r.d_u[k] = w[k] / (nu * nw) - (fu ? 0.0 : r.value * u[k] / (nu * nu));
            r.d_w[k] = u[k] / (nu * nw) - (fw ? 0.0 : r.value * w[k] / (nw * nw));
        }
    }
    return r;
}

}  // namespace

double view_alignment_loss(const Tensor& za, const Tensor& zb, const Tensor& va, const Tensor& vb, double eps,
                           Tensor* grad_a, Tensor* grad_b, LossDiagnostics* diag) {
    if (za.rank() != 2 || !za.same_shape(zb) || za.rows() == 0) fail(ErrorKind::Shape, "view_alignment_loss: embedding shapes differ");
    if (va.rows() != za.rows() || vb.rows() != za.rows() || va.cols() != 3 || vb.cols() != 3) {
        fail(ErrorKind::Shape, "view_alignment_loss: camera directions must be B x 3");
    }
    for (const Tensor* v : {&va, &vb}) {
        for (std::size_t i = 0; i < v->rows(); ++i) {
            const double* r = v->row(i);
            if (std::abs(std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) - 1.0) > 1e-6) {
                fail(ErrorKind::Validation, "camera direction rows must be unit vectors");
            }
        }
    }
    const std::size_t b = za.rows();
    const std::size_t d = za.cols();
    const bool want = grad_a || grad_b;
    if (grad_a) *grad_a = Tensor::matrix(b, d);
    if (grad_b) *grad_b = Tensor::matrix(b, d);
    std::size_t guarded = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const CosineResult ce = cosine(za.row(i), zb.row(i), d, eps, want, &guarded);
        const double cv = cosine(va.row(i), vb.row(i), 3, eps, false, nullptr).value;
        const double diff = ce.value - cv;
        loss += diff * diff;
        if (want) {
            const double g = 2.0 * diff / static_cast<double>(b);
            for (std::size_t k = 0; k < d; ++k) {
                if (grad_a) (*grad_a)(i, k) = g * ce.d_u[k];
                if (grad_b) (*grad_b)(i, k) = g * ce.d_w[k];
            }
        }
    }
    if (diag) diag->guarded_rows += guarded;
    return loss / static_cast<double>(b);
}

double variance_loss(const Tensor& z, double sigma_target_sq, Tensor* grad) {
    require_batch(z, "variance_loss");
    const std::size_t b = z.rows();
    const std::size_t d = z.cols();
    if (grad) *grad = Tensor::matrix(b, d);
    double loss = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < b; ++i) mean += z(i, j);
        mean /= static_cast<double>(b);
        double var = 0.0;
        for (std::size_t i = 0; i < b; ++i) var += (z(i, j) - mean) * (z(i, j) - mean);
        var /= static_cast<double>(b);
        const double gap = var - sigma_target_sq;
        loss += gap * gap;
        if (grad) {
            const double scale = 2.0 * gap / static_cast<double>(d) * 2.0 / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) (*grad)(i, j) = scale * (z(i, j) - mean);
        }
    }
    return loss / static_cast<double>(d);
}

double kl_uniform_loss(const Tensor& z, double eps, Tensor* grad, LossDiagnostics* diag) {
    if (z.rank() != 2 || z.rows() == 0) fail(ErrorKind::Shape, "kl_uniform_loss expects a non-empty B x D matrix");
    const std::size_t b = z.rows();
    const std::size_t d = z.cols();
    const double norm = 1.0 / (static_cast<double>(b) * static_cast<double>(d));
    if (grad) *grad = Tensor::matrix(b, d);
    double loss = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        double s = nn::sigmoid(z[i]);
        bool clamped = false;
        if (s < eps) {
            s = eps;
            clamped = true;
        } else if (s > 1.0 - eps) {
            s = 1.0 - eps;
            clamped = true;
        }
        if (clamped && diag) ++diag->clamped_values;
        loss += s * std::log(s) + (1.0 - s) * std::log(1.0 - s);
        if (grad && !clamped) (*grad)[i] = norm * std::log(s / (1.0 - s)) * s * (1.0 - s);
    }
    return loss * norm;
}

Tensor column_slice(const Tensor& m, std::size_t begin, std::size_t count) {
    if (begin + count > m.cols()) fail(ErrorKind::Shape, "column slice out of range");
    Tensor out = Tensor::matrix(m.rows(), count);
    for (std::size_t i = 0; i < m.rows(); ++i) std::copy_n(m.row(i) + begin, count, out.row(i));
    return out;
}

namespace {

void add_columns(Tensor& into, const Tensor& part, std::size_t begin, double scale) {
    for (std::size_t i = 0; i < part.rows(); ++i) {
        for (std::size_t k = 0; k < part.cols(); ++k) into(i, begin + k) += scale * part(i, k);
    }
}

}  // namespace

TotalLoss total_loss(const Tensor& z_anchor, const Tensor& z_positive, const Tensor& v_anchor, const Tensor& v_positive,
                     std::size_t d_pose, const LossConfig& cfg, bool want_grad) {
    cfg.validate();
    if (!z_anchor.same_shape(z_positive) || z_anchor.rank() != 2) fail(ErrorKind::Shape, "total_loss: embedding batches differ");
    require_batch(z_anchor, "total_loss");
    const std::size_t d = z_anchor.cols();
    if (d_pose == 0 || d_pose >= d) fail(ErrorKind::Shape, "total_loss: d_pose must split the embedding");
    const std::size_t d_view = d - d_pose;
    const std::size_t b = z_anchor.rows();

    TotalLoss out;
    auto& diag = out.diagnostics;
    Tensor ga, gb;
    Tensor* pa = want_grad ? &ga : nullptr;
    Tensor* pb = want_grad ? &gb : nullptr;
    if (want_grad) {
        out.grad_anchor = Tensor::matrix(b, d);
        out.grad_positive = Tensor::matrix(b, d);
    }

    const Tensor pose_a = column_slice(z_anchor, 0, d_pose);
    const Tensor pose_b = column_slice(z_positive, 0, d_pose);
    out.terms.pose = barlow_twins_loss(pose_a, pose_b, cfg.bt_lambda, cfg.epsilon, pa, pb, &diag);
    if (want_grad) {
        add_columns(out.grad_anchor, ga, 0, cfg.w_pose);
        add_columns(out.grad_positive, gb, 0, cfg.w_pose);
    }

    const Tensor view_a = column_slice(z_anchor, d_pose, d_view);
    const Tensor view_b = column_slice(z_positive, d_pose, d_view);
    out.terms.view = view_alignment_loss(view_a, view_b, v_anchor, v_positive, cfg.epsilon, pa, pb, &diag);
    if (want_grad) {
        add_columns(out.grad_anchor, ga, d_pose, cfg.w_view);
        add_columns(out.grad_positive, gb, d_pose, cfg.w_view);
    }

    out.terms.var = variance_loss(z_anchor, cfg.sigma_target_sq, pa);
    if (want_grad) add_columns(out.grad_anchor, ga, 0, cfg.w_reg);
    out.terms.var += variance_loss(z_positive, cfg.sigma_target_sq, pa);
    if (want_grad) add_columns(out.grad_positive, ga, 0, cfg.w_reg);

    out.terms.klu = kl_uniform_loss(z_anchor, cfg.epsilon, pa, &diag);
    if (want_grad) add_columns(out.grad_anchor, ga, 0, cfg.w_reg);
    out.terms.klu += kl_uniform_loss(z_positive, cfg.epsilon, pa, &diag);
    if (want_grad) add_columns(out.grad_positive, ga, 0, cfg.w_reg);

    out.terms.total = cfg.w_pose * out.terms.pose + cfg.w_view * out.terms.view +
                      cfg.w_reg * (out.terms.var + out.terms.klu);
    return out;
}

void write_loss_csv_header(std::ostream& out) { out << "step,L_pose,L_view,L_var,L_klu,L_total\n"; }

void write_loss_csv_row(std::ostream& out, std::size_t step, const LossTerms& t) {
    char buf[64];
    const auto fmt = [&](double v) {
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    };
    out << step << ',' << fmt(t.pose) << ',' << fmt(t.view) << ',' << fmt(t.var) << ',' << fmt(t.klu) << ','
        << fmt(t.total) << '\n';
}

}  // namespace skatepose
