#include "skatepose/gradcheck.hpp"

#include "skatepose/error.hpp"
#include "skatepose/losses.hpp"
#include "skatepose/rng.hpp"

#include <algorithm>
#include <cmath>

namespace skatepose {

namespace {

constexpr std::uint64_t kDataTag = 0x6a7a;
constexpr std::uint64_t kModelTag = 0x3d31;
constexpr std::uint64_t kMaskTag = 0xd40f;

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t = Tensor::matrix(rows, cols);
    for (auto& v : t.data) v = rng.normal();
    return t;
}

Tensor random_unit_rows(std::size_t rows, Rng& rng) {
    Tensor t = Tensor::matrix(rows, 3);
    for (std::size_t i = 0; i < rows; ++i) {
        double n = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            t(i, k) = rng.normal();
            n += t(i, k) * t(i, k);
        }
        n = std::sqrt(n);
        for (std::size_t k = 0; k < 3; ++k) t(i, k) /= n;
    }
    return t;
}

EncoderParams make_encoder(const GradientSuiteConfig& cfg, Rng& rng) {
    EncoderConfig ec;
    ec.input_dim = 2 * cfg.joints;
    ec.hidden = cfg.hidden;
    ec.d_pose = cfg.d_pose;
    ec.d_view = cfg.d_view;
    return init_encoder(ec, rng);
}

template <class P>
std::vector<const Tensor*> const_tensors(const P& p) {
    return tensor_list<P>(p);
}

GradientCheckEntry check_contrastive(const GradientSuiteConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, kModelTag, 0));
    EncoderParams enc = make_encoder(cfg, rng);
    Rng data(derive_seed(cfg.seed, kDataTag, 0));
    const Tensor xa = random_matrix(cfg.batch, 2 * cfg.joints, data);
    const Tensor xp = random_matrix(cfg.batch, 2 * cfg.joints, data);
    const Tensor va = random_unit_rows(cfg.batch, data);
    const Tensor vp = random_unit_rows(cfg.batch, data);
    const LossConfig lc;

    EncoderCache ca, cp;
    const Tensor za = encoder_forward(enc, xa, &ca);
    const Tensor zp = encoder_forward(enc, xp, &cp);
    const TotalLoss tl = total_loss(za, zp, va, vp, cfg.d_pose, lc, true);
    EncoderParams grad = zeros_like(enc);
    encoder_backward(enc, ca, tl.grad_anchor, grad);
    encoder_backward(enc, cp, tl.grad_positive, grad);

    const auto loss = [&] {
        return total_loss(encoder_forward(enc, xa), encoder_forward(enc, xp), va, vp, cfg.d_pose, lc, false).terms.total;
    };
    return {"total_loss/encoder", grad_check(named_tensors(enc), const_tensors(grad), loss, cfg.step, cfg.tolerance,
                                             cfg.abs_floor)};
}

struct ClassifierCase {
    EncoderParams encoder;
    ClassifierParams head;
    std::vector<Tensor> sequences;
    std::vector<std::size_t> labels;
};

ClassifierCase make_classifier_case(const GradientSuiteConfig& cfg) {
    ClassifierCase c;
    Rng rng(derive_seed(cfg.seed, kModelTag, 1));
    c.encoder = make_encoder(cfg, rng);
    ClassifierConfig hc;
    hc.input_dim = cfg.d_pose + cfg.d_view;
    hc.gru_hidden = cfg.gru_hidden;
    hc.fc_hidden = cfg.fc_hidden;
    hc.num_classes = cfg.classes;
    c.head = init_classifier(hc, rng);
    Rng data(derive_seed(cfg.seed, kDataTag, 1));
    for (std::size_t b = 0; b < cfg.batch; ++b) {
        c.sequences.push_back(random_matrix(cfg.frames, 2 * cfg.joints, data));
        c.labels.push_back(data.index(cfg.classes));
    }
    return c;
}

// Mean cross-entropy over the batch; dropout masks come from a per-item seed
// so every evaluation sees the same masks.
double classifier_loss(const ClassifierCase& c, std::uint64_t seed, EncoderParams* enc_grad,
                       ClassifierParams* head_grad) {
    const double inv = 1.0 / static_cast<double>(c.sequences.size());
    double total = 0.0;
    for (std::size_t b = 0; b < c.sequences.size(); ++b) {
        Rng masks(derive_seed(seed, kMaskTag, b));
        EncoderCache ec;
        ClassifierCache hc;
        const bool want = enc_grad != nullptr;
        const Tensor z = encoder_forward(c.encoder, c.sequences[b], want ? &ec : nullptr);
        const Tensor logits = classifier_forward(c.head, z, true, masks, want ? &hc : nullptr);
        const auto ce = nn::cross_entropy(logits, {c.labels[b]});
        total += inv * ce.loss;
        if (want) {
            Tensor dlogits = ce.dlogits;
            for (auto& v : dlogits.data) v *= inv;
            const Tensor dz = classifier_backward(c.head, hc, dlogits, *head_grad);
            encoder_backward(c.encoder, ec, dz, *enc_grad);
        }
    }
    return total;
}

std::vector<GradientCheckEntry> check_classifier(const GradientSuiteConfig& cfg) {
    ClassifierCase c = make_classifier_case(cfg);
    EncoderParams enc_grad = zeros_like(c.encoder);
    ClassifierParams head_grad = zeros_like(c.head);
    const std::uint64_t mask_seed = derive_seed(cfg.seed, kMaskTag);
    classifier_loss(c, mask_seed, &enc_grad, &head_grad);
    const auto loss = [&] { return classifier_loss(c, mask_seed, nullptr, nullptr); };
    std::vector<GradientCheckEntry> out;
    out.push_back({"classifier_loss/head", grad_check(named_tensors(c.head), const_tensors(head_grad), loss, cfg.step,
                                                      cfg.tolerance, cfg.abs_floor)});
    out.push_back({"classifier_loss/encoder", grad_check(named_tensors(c.encoder), const_tensors(enc_grad), loss,
                                                         cfg.step, cfg.tolerance, cfg.abs_floor)});
    return out;
}

}  // namespace

GradientSuiteReport run_gradient_suite(const GradientSuiteConfig& cfg) {
    if (cfg.batch < 2) fail(ErrorKind::BatchSize, "gradient suite needs a batch of at least 2");
    if (cfg.joints == 0 || cfg.frames == 0 || cfg.classes < 2 || cfg.d_pose == 0) {
        fail(ErrorKind::Config, "gradient suite dimensions must be positive with at least 2 classes");
    }
    if (!(cfg.step > 0.0) || !(cfg.tolerance > 0.0)) fail(ErrorKind::Config, "step and tolerance must be positive");
    GradientSuiteReport report;
    report.checks.push_back(check_contrastive(cfg));
    for (auto& e : check_classifier(cfg)) report.checks.push_back(std::move(e));
    report.passed = true;
    for (const auto& e : report.checks) {
        report.max_relative_error = std::max(report.max_relative_error, e.report.max_relative_error);
        report.passed = report.passed && e.report.passed;
    }
    return report;
}

nlohmann::json to_json(const GradientSuiteReport& report) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& e : report.checks) {
        checks.push_back({{"name", e.name},
                          {"max_relative_error", e.report.max_relative_error},
                          {"max_abs_error", e.report.max_abs_error},
                          {"worst_entry", e.report.worst_entry},
                          {"checked", e.report.checked},
                          {"tolerance", e.report.tolerance},
                          {"passed", e.report.passed}});
    }
    return {{"passed", report.passed}, {"max_relative_error", report.max_relative_error}, {"checks", checks}};
}

}  // namespace skatepose
