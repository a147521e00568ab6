#pragma once

#include "skatepose/nn.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace skatepose {

struct EncoderConfig {
    std::size_t input_dim = 34;  // 2N
    std::vector<std::size_t> hidden{256, 256};
    std::size_t d_pose = 32;
    std::size_t d_view = 8;

    std::size_t embedding_dim() const noexcept { return d_pose + d_view; }
};

// MLP: affine + ReLU for every hidden layer, linear output of width d.
struct EncoderParams {
    std::vector<nn::LinearParams> layers;
    std::size_t d_pose = 0;
    std::size_t d_view = 0;

    std::size_t input_dim() const noexcept { return layers.empty() ? 0 : layers.front().in_features(); }
    std::size_t embedding_dim() const noexcept { return d_pose + d_view; }
    EncoderConfig config() const;
    void validate() const;

    template <class F>
    void visit(F&& f) {
        for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit("encoder.layer" + std::to_string(i) + ".", f);
    }
    template <class F>
    void visit(F&& f) const {
        for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit("encoder.layer" + std::to_string(i) + ".", f);
    }
};

EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng);

struct EncoderCache {
    std::vector<Tensor> inputs;       // input of every layer
    std::vector<Tensor> pre_activation;  // output of every affine map
    bool valid = false;
};

// batch: B x input_dim -> B x d.
Tensor encoder_forward(const EncoderParams& p, const Tensor& batch, EncoderCache* cache = nullptr);
// Accumulates into grad; returns d(batch).
Tensor encoder_backward(const EncoderParams& p, const EncoderCache& cache, const Tensor& dz, EncoderParams& grad);

struct ClassifierConfig {
    std::size_t input_dim = 40;  // d
    std::size_t gru_hidden = 128;  // per direction
    std::size_t fc_hidden = 128;
    std::size_t num_classes = 28;
    double dropout1 = 0.5;
    double dropout2 = 0.5;
};

// BiGRU -> BiGRU -> temporal max pool -> FC -> dropout -> ReLU -> dropout -> FC.
struct ClassifierParams {
    nn::BiGruParams gru1;
    nn::BiGruParams gru2;
    nn::LinearParams fc1;
    nn::LinearParams fc2;
    double dropout1 = 0.5;
    double dropout2 = 0.5;

    std::size_t input_dim() const noexcept { return gru1.forward.input(); }
    std::size_t num_classes() const noexcept { return fc2.out_features(); }
    ClassifierConfig config() const;
    void validate() const;

    template <class F>
    void visit(F&& f) {
        gru1.visit("classifier.gru1.", f);
        gru2.visit("classifier.gru2.", f);
        fc1.visit("classifier.fc1.", f);
        fc2.visit("classifier.fc2.", f);
    }
    template <class F>
    void visit(F&& f) const {
        gru1.visit("classifier.gru1.", f);
        gru2.visit("classifier.gru2.", f);
        fc1.visit("classifier.fc1.", f);
        fc2.visit("classifier.fc2.", f);
    }
};

ClassifierParams init_classifier(const ClassifierConfig& cfg, Rng& rng);

struct ClassifierCache {
    Tensor input;
    nn::BiGruCache gru1;
    Tensor h1;
    nn::BiGruCache gru2;
    Tensor h2;
    nn::MaxPoolResult pool;
    Tensor pooled;  // 1 x 2H
    Tensor a1;      // fc1 output
    Tensor mask1;
    Tensor relu_in;
    Tensor mask2;
    Tensor fc2_in;
    bool valid = false;
};

// Two stacked bidirectional GRU layers: T x d -> T x 2H.
Tensor gru_sequence_forward(const ClassifierParams& p, const Tensor& sequence, ClassifierCache* cache = nullptr);

// embeddings: T x d -> 1 x C logits. Dropout draws from rng only when train.
Tensor classifier_forward(const ClassifierParams& p, const Tensor& embeddings, bool train, Rng& rng,
                          ClassifierCache* cache = nullptr);
// dlogits: 1 x C. Accumulates into grad; returns d(embeddings).
Tensor classifier_backward(const ClassifierParams& p, const ClassifierCache& cache, const Tensor& dlogits,
                           ClassifierParams& grad);

// Parameter utilities shared by the optimizer, checkpoints and grad checks.
template <class P>
P zeros_like(const P& params) {
    P out = params;
    out.visit([](const std::string&, Tensor& t) { t.fill(0.0); });
    return out;
}

template <class P>
std::vector<Tensor*> tensor_list(P& params) {
    std::vector<Tensor*> out;
    params.visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

template <class P>
std::vector<const Tensor*> tensor_list(const P& params) {
    std::vector<const Tensor*> out;
    params.visit([&](const std::string&, const Tensor& t) { out.push_back(&t); });
    return out;
}

template <class P>
std::vector<std::string> tensor_names(const P& params) {
    std::vector<std::string> out;
    params.visit([&](const std::string& name, const Tensor&) { out.push_back(name); });
    return out;
}

template <class P>
std::size_t parameter_count(const P& params) {
    std::size_t n = 0;
    params.visit([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

template <class P>
void accumulate(P& into, const P& from, double scale = 1.0) {
    auto a = tensor_list(into);
    auto b = tensor_list(from);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t k = 0; k < a[i]->size(); ++k) (*a[i])[k] += scale * (*b[i])[k];
    }
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // One update of every tensor in params from the matching tensor in grads.
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    template <class P>
    void step(P& params, const P& grads) {
        step(tensor_list(params), tensor_list(grads));
    }

    std::size_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_entry;
    std::size_t checked = 0;
    double tolerance = 0.0;
    bool passed = false;
};

struct NamedTensor {
    std::string name;
    Tensor* tensor = nullptr;
};

// Central differences of `loss` over every entry of `params`, compared with
// the matching `analytic` gradients. The relative error of an entry is
// |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport grad_check(const std::vector<NamedTensor>& params, const std::vector<const Tensor*>& analytic,
                           const std::function<double()>& loss, double step, double tolerance,
                           double abs_floor = 1e-6);

template <class P>
std::vector<NamedTensor> named_tensors(P& params) {
    std::vector<NamedTensor> out;
    params.visit([&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
    return out;
}

}  // namespace skatepose
