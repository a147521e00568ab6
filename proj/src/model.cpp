#include "skatepose/model.hpp"

#include "skatepose/error.hpp"

#include <algorithm>
#include <cmath>

namespace skatepose {

EncoderConfig EncoderParams::config() const {
    EncoderConfig cfg;
    cfg.input_dim = input_dim();
    cfg.hidden.clear();
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) cfg.hidden.push_back(layers[i].out_features());
    cfg.d_pose = d_pose;
    cfg.d_view = d_view;
    return cfg;
}

void EncoderParams::validate() const {
    if (layers.empty()) fail(ErrorKind::Shape, "encoder has no layers");
    for (std::size_t i = 1; i < layers.size(); ++i) {
        if (layers[i].in_features() != layers[i - 1].out_features()) fail(ErrorKind::Shape, "encoder layer widths do not chain");
    }
    if (layers.back().out_features() != d_pose + d_view) {
        fail(ErrorKind::Shape, "encoder output width must equal d_pose + d_view");
    }
}

EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng) {
    if (cfg.d_pose + cfg.d_view == 0) fail(ErrorKind::Config, "embedding dimension must be positive");
    EncoderParams p;
    p.d_pose = cfg.d_pose;
    p.d_view = cfg.d_view;
    std::size_t in = cfg.input_dim;
    for (std::size_t width : cfg.hidden) {
        p.layers.push_back(nn::init_linear(in, width, rng));
        in = width;
    }
    p.layers.push_back(nn::init_linear(in, cfg.embedding_dim(), rng));
    return p;
}

Tensor encoder_forward(const EncoderParams& p, const Tensor& batch, EncoderCache* cache) {
    if (batch.rank() != 2 || batch.cols() != p.input_dim()) {
        fail(ErrorKind::Shape, "encoder expects B x " + std::to_string(p.input_dim()) + " input, got width " +
                                   std::to_string(batch.cols()));
    }
    if (cache) {
        cache->inputs.clear();
        cache->pre_activation.clear();
    }
    Tensor x = batch;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        Tensor y = nn::linear_forward(p.layers[i], x);
        const bool last = i + 1 == p.layers.size();
        if (cache) {
            cache->inputs.push_back(std::move(x));
            cache->pre_activation.push_back(y);
        }
        x = last ? std::move(y) : nn::relu(y);
    }
    if (cache) cache->valid = true;
    return x;
}

Tensor encoder_backward(const EncoderParams& p, const EncoderCache& cache, const Tensor& dz, EncoderParams& grad) {
    if (!cache.valid || cache.inputs.size() != p.layers.size()) {
        fail(ErrorKind::State, "encoder backward called before forward");
    }
    Tensor d = dz;
    for (std::size_t i = p.layers.size(); i-- > 0;) {
        if (i + 1 != p.layers.size()) d = nn::relu_backward(cache.pre_activation[i], d);
        d = nn::linear_backward(p.layers[i], cache.inputs[i], d, grad.layers[i]);
    }
    return d;
}

ClassifierConfig ClassifierParams::config() const {
    ClassifierConfig cfg;
    cfg.input_dim = input_dim();
    cfg.gru_hidden = gru1.forward.hidden();
    cfg.fc_hidden = fc1.out_features();
    cfg.num_classes = num_classes();
    cfg.dropout1 = dropout1;
    cfg.dropout2 = dropout2;
    return cfg;
}

void ClassifierParams::validate() const {
    const std::size_t h = gru1.forward.hidden();
    if (gru2.forward.input() != 2 * h || fc1.in_features() != 2 * gru2.forward.hidden() ||
        fc2.in_features() != fc1.out_features()) {
        fail(ErrorKind::Shape, "classifier layer widths do not chain");
    }
}

ClassifierParams init_classifier(const ClassifierConfig& cfg, Rng& rng) {
    if (cfg.num_classes < 2) fail(ErrorKind::Config, "classifier needs at least two classes");
    ClassifierParams p;
    p.gru1 = nn::init_bigru(cfg.input_dim, cfg.gru_hidden, rng);
    p.gru2 = nn::init_bigru(2 * cfg.gru_hidden, cfg.gru_hidden, rng);
    p.fc1 = nn::init_linear(2 * cfg.gru_hidden, cfg.fc_hidden, rng);
    p.fc2 = nn::init_linear(cfg.fc_hidden, cfg.num_classes, rng);
    p.dropout1 = cfg.dropout1;
    p.dropout2 = cfg.dropout2;
    return p;
}

Tensor gru_sequence_forward(const ClassifierParams& p, const Tensor& sequence, ClassifierCache* cache) {
    ClassifierCache local;
    ClassifierCache& c = cache ? *cache : local;
    c.input = sequence;
    c.h1 = nn::bigru_forward(p.gru1, sequence, c.gru1);
    c.h2 = nn::bigru_forward(p.gru2, c.h1, c.gru2);
    return c.h2;
}

Tensor classifier_forward(const ClassifierParams& p, const Tensor& embeddings, bool train, Rng& rng,
                          ClassifierCache* cache) {
    if (embeddings.rank() != 2 || embeddings.rows() == 0 || embeddings.cols() != p.input_dim()) {
        fail(ErrorKind::Shape, "classifier expects a non-empty T x " + std::to_string(p.input_dim()) + " sequence");
    }
    ClassifierCache local;
    ClassifierCache& c = cache ? *cache : local;
    gru_sequence_forward(p, embeddings, &c);
    c.pool = nn::temporal_max_pool(c.h2);
    c.pooled = Tensor::matrix(1, c.pool.pooled.size());
    std::copy(c.pool.pooled.data.begin(), c.pool.pooled.data.end(), c.pooled.data.begin());
    c.a1 = nn::linear_forward(p.fc1, c.pooled);
    c.mask1 = nn::dropout_mask(c.a1.size(), p.dropout1, train, rng);
    c.relu_in = c.a1;
    for (std::size_t i = 0; i < c.relu_in.size(); ++i) c.relu_in[i] *= c.mask1[i];
    c.fc2_in = nn::relu(c.relu_in);
    c.mask2 = nn::dropout_mask(c.fc2_in.size(), p.dropout2, train, rng);
    for (std::size_t i = 0; i < c.fc2_in.size(); ++i) c.fc2_in[i] *= c.mask2[i];
    c.valid = true;
    return nn::linear_forward(p.fc2, c.fc2_in);
}

Tensor classifier_backward(const ClassifierParams& p, const ClassifierCache& c, const Tensor& dlogits,
                           ClassifierParams& grad) {
    if (!c.valid) fail(ErrorKind::State, "classifier backward called before forward");
    Tensor d = nn::linear_backward(p.fc2, c.fc2_in, dlogits, grad.fc2);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= c.mask2[i];
    d = nn::relu_backward(c.relu_in, d);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= c.mask1[i];
    d = nn::linear_backward(p.fc1, c.pooled, d, grad.fc1);
    Tensor dpool = Tensor::vector(d.size());
    std::copy(d.data.begin(), d.data.end(), dpool.data.begin());
    Tensor dh2 = nn::temporal_max_pool_backward(c.pool, c.h2.rows(), dpool);
    Tensor dh1 = nn::bigru_backward(p.gru2, c.h1, c.gru2, dh2, grad.gru2);
    return nn::bigru_backward(p.gru1, c.input, c.gru1, dh1, grad.gru1);
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size()) fail(ErrorKind::Shape, "optimizer: parameter and gradient lists differ");
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }
    if (m_.size() != params.size()) fail(ErrorKind::State, "optimizer: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const auto& g = *grads[i];
        if (g.size() != p.size()) fail(ErrorKind::Shape, "optimizer: gradient shape mismatch");
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

GradCheckReport grad_check(const std::vector<NamedTensor>& params, const std::vector<const Tensor*>& analytic,
                           const std::function<double()>& loss, double step, double tolerance, double abs_floor) {
    if (params.size() != analytic.size()) fail(ErrorKind::Shape, "grad_check: parameter and gradient lists differ");
    GradCheckReport report;
    report.tolerance = tolerance;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = *params[i].tensor;
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double saved = t[k];
            t[k] = saved + step;
            const double up = loss();
            t[k] = saved - step;
            const double down = loss();
            t[k] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = (*analytic[i])[k];
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), abs_floor});
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > report.max_relative_error || report.checked == 0) {
                report.max_relative_error = rel;
                report.worst_entry = params[i].name + "[" + std::to_string(k) + "]";
            }
            ++report.checked;
        }
    }
    report.passed = report.max_relative_error < tolerance;
    return report;
}

}  // namespace skatepose
