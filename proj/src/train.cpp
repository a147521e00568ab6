#include "skatepose/train.hpp"

#include "skatepose/error.hpp"
#include "skatepose/kernels.hpp"
#include "skatepose/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

namespace skatepose {

namespace {

// Seed streams kept apart by a fixed tag.
constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kHeadTag = 0x4ead;
constexpr std::uint64_t kPairTag = 0x9a12;
constexpr std::uint64_t kShuffleTag = 0x5f1e;
constexpr std::uint64_t kProbeTag = 0x960b;
constexpr std::uint64_t kDropoutTag = 0xd20f;
constexpr std::uint64_t kSubsetTag = 0x5ab5;

std::string fmt(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void check_finite(double v, std::size_t step, const char* what) {
    if (!std::isfinite(v)) {
        fail(ErrorKind::Divergence, std::string(what) + " became non-finite at step " + std::to_string(step));
    }
}

Tensor batch_matrix(const std::vector<const Pose2D*>& views) {
    const std::size_t width = 2 * views.front()->joint_count();
    Tensor m = Tensor::matrix(views.size(), width);
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (2 * views[i]->joint_count() != width) fail(ErrorKind::Shape, "views in a batch differ in joint count");
        views[i]->flatten_into(m.row(i));
    }
    return m;
}

Tensor direction_matrix(const std::vector<Eigen::Vector3d>& v) {
    Tensor m = Tensor::matrix(v.size(), 3);
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (int k = 0; k < 3; ++k) m(i, static_cast<std::size_t>(k)) = v[i][k];
    }
    return m;
}

}  // namespace

void PretrainConfig::validate() const {
    if (batch_size < 2) fail(ErrorKind::Config, "pre-training batch size must be at least 2");
    if (!(optimizer.learning_rate >= 0.0)) fail(ErrorKind::Config, "learning rate must be non-negative");
    if (encoder.d_pose == 0 || encoder.d_view == 0) fail(ErrorKind::Config, "d_pose and d_view must be positive");
    if (threads == 0) fail(ErrorKind::Config, "threads must be at least 1");
    loss.validate();
    augment.validate();
}

EncoderParams initial_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
    Rng rng(derive_seed(seed, kInitTag));
    return init_encoder(cfg, rng);
}

ViewInvarianceReport evaluate_view_invariance(const EncoderParams& params, const std::vector<CanonicalPose>& poses,
                                              std::uint64_t seed) {
    const std::size_t n = poses.size();
    if (n < 2) fail(ErrorKind::InsufficientData, "view-invariance evaluation needs at least 2 poses");
    std::vector<Pose2D> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, kProbeTag, i));
        const VirtualCamera ca = sample_virtual_camera(rng);
        const VirtualCamera cb = sample_virtual_camera(rng);
        a[i] = normalize_2d_scale(project_perspective(poses[i], ca));
        b[i] = normalize_2d_scale(project_perspective(poses[i], cb));
    }
    const Tensor za = column_slice(embed_sequence(params, a), 0, params.d_pose);
    const Tensor zb = column_slice(embed_sequence(params, b), 0, params.d_pose);
    const auto unit_rows = [](Tensor m) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < m.cols(); ++k) s += m(i, k) * m(i, k);
            s = std::max(std::sqrt(s), 1e-12);
            for (std::size_t k = 0; k < m.cols(); ++k) m(i, k) /= s;
        }
        return m;
    };
    const Tensor ua = unit_rows(za);
    const Tensor ub = unit_rows(zb);
    ViewInvarianceReport r;
    r.poses = n;
    std::size_t hits = 0, hits_cosine = 0;
    double same = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best_cos = -2.0, best_dist = std::numeric_limits<double>::infinity();
        std::size_t arg_cos = 0, arg_dist = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = kernels::dot(ua.row_span(i), ub.row_span(j));
            if (c > best_cos) {
                best_cos = c;
                arg_cos = j;
            }
            double dist = 0.0;
            for (std::size_t k = 0; k < za.cols(); ++k) {
                const double e = za(i, k) - zb(j, k);
                dist += e * e;
            }
            if (dist < best_dist) {
                best_dist = dist;
                arg_dist = j;
            }
            (i == j ? same : diff) += c;
        }
        hits += arg_dist == i ? 1 : 0;
        hits_cosine += arg_cos == i ? 1 : 0;
    }
    const double nd = static_cast<double>(n);
    r.top1_retrieval = static_cast<double>(hits) / nd;
    r.top1_retrieval_cosine = static_cast<double>(hits_cosine) / nd;
    r.same_pose_cosine = same / nd;
    r.different_pose_cosine = diff / (nd * (nd - 1.0));
    r.probe = r.same_pose_cosine - r.different_pose_cosine;
    return r;
}

PretrainResult pretrain_encoder(const std::vector<CanonicalPose>& poses, const PretrainConfig& cfg,
                                const EncoderParams* init, const EpochCallback& on_epoch) {
    cfg.validate();
    if (poses.size() < cfg.batch_size) {
        fail(ErrorKind::InsufficientData, "pre-training needs at least batch-size poses (" + std::to_string(cfg.batch_size) +
                                              "), got " + std::to_string(poses.size()));
    }
    PretrainResult result;
    result.encoder = init ? *init : initial_encoder(cfg.encoder, cfg.seed);
    result.encoder.validate();
    const std::size_t n_joints = static_cast<std::size_t>(poses.front().coords.rows());
    if (2 * n_joints != result.encoder.input_dim()) {
        fail(ErrorKind::Shape, "encoder input width " + std::to_string(result.encoder.input_dim()) + " does not match " +
                                   std::to_string(n_joints) + "-joint poses");
    }
    const std::size_t d_pose = result.encoder.d_pose;
    Adam adam(cfg.optimizer);
    const std::vector<CanonicalPose> probe_set(poses.begin(),
                                               poses.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.probe_poses, poses.size())));

    std::vector<std::size_t> order(poses.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle(derive_seed(cfg.seed, kShuffleTag, epoch));
        shuffle.shuffle(order.begin(), order.end());

        double epoch_loss = 0.0;
        std::size_t epoch_steps = 0;
        for (std::size_t start = 0; start + 1 < order.size(); start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, order.size() - start);
            if (b < 2) break;
            std::vector<ContrastivePair> pairs(b);
            parallel_for(b, cfg.threads, [&](std::size_t i) {
                Rng rng(derive_seed(derive_seed(cfg.seed, kPairTag), epoch, start + i));
                pairs[i] = make_contrastive_pair(poses[order[start + i]], cfg.augment, rng);
            });
            std::vector<const Pose2D*> anchors, positives;
            std::vector<Eigen::Vector3d> va, vp;
            for (const auto& p : pairs) {
                anchors.push_back(&p.anchor);
                positives.push_back(&p.positive);
                va.push_back(p.v_anchor);
                vp.push_back(p.v_positive);
            }
            EncoderCache ca, cp;
            const Tensor za = encoder_forward(result.encoder, batch_matrix(anchors), &ca);
            const Tensor zp = encoder_forward(result.encoder, batch_matrix(positives), &cp);
            const TotalLoss loss = total_loss(za, zp, direction_matrix(va), direction_matrix(vp), d_pose, cfg.loss, true);
            check_finite(loss.terms.total, step, "pre-training loss");
            EncoderParams grad = zeros_like(result.encoder);
            encoder_backward(result.encoder, ca, loss.grad_anchor, grad);
            encoder_backward(result.encoder, cp, loss.grad_positive, grad);
            adam.step(result.encoder, grad);
            result.history.push_back(loss.terms);
            epoch_loss += loss.terms.total;
            ++epoch_steps;
            ++step;
        }
        double probe = 0.0;
        if (probe_set.size() >= 2) probe = evaluate_view_invariance(result.encoder, probe_set, derive_seed(cfg.seed, epoch)).probe;
        result.probe.push_back(probe);
        if (on_epoch) on_epoch(epoch, epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0, probe, result.encoder);
    }
    return result;
}

Tensor sequence_matrix(const std::vector<Pose2D>& frames) {
    if (frames.empty()) fail(ErrorKind::Shape, "sequence has no frames");
    std::vector<const Pose2D*> views;
    views.reserve(frames.size());
    for (const auto& f : frames) views.push_back(&f);
    return batch_matrix(views);
}

Tensor embed_sequence(const EncoderParams& params, const std::vector<Pose2D>& frames) {
    return encoder_forward(params, sequence_matrix(frames));
}

void FinetuneConfig::validate() const {
    if (batch_size < 1) fail(ErrorKind::Config, "fine-tuning batch size must be at least 1");
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) fail(ErrorKind::Config, "label fraction must lie in (0, 1]");
    if (!(optimizer.learning_rate >= 0.0)) fail(ErrorKind::Config, "learning rate must be non-negative");
    for (double r : {dropout1, dropout2}) {
        if (!(r >= 0.0 && r < 1.0)) fail(ErrorKind::Config, "dropout rates must lie in [0, 1)");
    }
    if (gru_hidden == 0 || fc_hidden == 0) fail(ErrorKind::Config, "classifier widths must be positive");
    if (threads == 0) fail(ErrorKind::Config, "threads must be at least 1");
}

std::vector<std::size_t> stratified_subsample(const LabeledSequenceDataset& data, double fraction, std::uint64_t seed,
                                              std::vector<std::string>* warnings) {
    if (!(fraction > 0.0 && fraction <= 1.0)) fail(ErrorKind::Config, "label fraction must lie in (0, 1]");
    std::vector<std::vector<std::size_t>> by_class(data.num_classes());
    for (std::size_t i = 0; i < data.items.size(); ++i) by_class.at(data.items[i].label).push_back(i);
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) {
            if (warnings) warnings->push_back("class " + std::to_string(c) + " has no training items");
            continue;
        }
        Rng rng(derive_seed(seed, kSubsetTag, c));
        rng.shuffle(idx.begin(), idx.end());
        // The small slack keeps e.g. 0.1 * 100 at 10 rather than 11.
        const double want = std::ceil(fraction * static_cast<double>(idx.size()) - 1e-9);
        const std::size_t keep = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, idx.size());
        out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

struct ItemGrad {
    EncoderParams encoder;
    ClassifierParams classifier;
    double loss = 0.0;
    bool correct = false;
};

std::size_t argmax(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k) {
        if (logits[k] > logits[best]) best = k;
    }
    return best;
}

}  // namespace

std::size_t predict(const EncoderParams& encoder, const ClassifierParams& classifier, const std::vector<Pose2D>& frames) {
    Rng unused(0);
    return argmax(classifier_forward(classifier, embed_sequence(encoder, frames), false, unused));
}

std::vector<std::size_t> predict_all(const EncoderParams& encoder, const ClassifierParams& classifier,
                                     const LabeledSequenceDataset& data, std::size_t threads) {
    std::vector<std::size_t> out(data.items.size());
    parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = predict(encoder, classifier, data.items[i].frames); });
    return out;
}

double classification_accuracy(const EncoderParams& encoder, const ClassifierParams& classifier,
                               const LabeledSequenceDataset& data, std::size_t threads) {
    if (data.items.empty()) fail(ErrorKind::UndefinedMetric, "accuracy of an empty dataset");
    const auto pred = predict_all(encoder, classifier, data, threads);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.items[i].label ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

FinetuneResult finetune_classifier(const EncoderParams* pretrained, const LabeledSequenceDataset& train,
                                   const FinetuneConfig& cfg, const LabeledSequenceDataset* eval) {
    cfg.validate();
    train.validate();
    if (train.items.empty()) fail(ErrorKind::InsufficientData, "fine-tuning needs a non-empty dataset");
    if (train.num_classes() < 2) fail(ErrorKind::Config, "fine-tuning needs at least two classes");

    FinetuneResult result;
    result.encoder = pretrained ? *pretrained : initial_encoder(cfg.encoder, cfg.seed);
    result.encoder.validate();
    if (result.encoder.input_dim() != 2 * train.joint_count()) {
        fail(ErrorKind::Shape, "encoder input width " + std::to_string(result.encoder.input_dim()) +
                                   " does not match " + std::to_string(train.joint_count()) + "-joint sequences");
    }
    ClassifierConfig head;
    head.input_dim = result.encoder.embedding_dim();
    head.gru_hidden = cfg.gru_hidden;
    head.fc_hidden = cfg.fc_hidden;
    head.num_classes = train.num_classes();
    head.dropout1 = cfg.dropout1;
    head.dropout2 = cfg.dropout2;
    {
        Rng rng(derive_seed(cfg.seed, kHeadTag));
        result.classifier = init_classifier(head, rng);
    }

    result.subset = stratified_subsample(train, cfg.label_fraction, cfg.seed, &result.warnings);
    const std::size_t n = result.subset.size();
    const std::size_t epochs = cfg.epochs;

    Adam enc_opt(cfg.optimizer);
    Adam head_opt(cfg.optimizer);
    std::vector<std::size_t> order;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        order = result.subset;
        Rng shuffle(derive_seed(cfg.seed, kShuffleTag, epoch));
        shuffle.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, n - start);
            std::vector<ItemGrad> items(b);
            parallel_for(b, cfg.threads, [&](std::size_t i) {
                const LabeledSequence& seq = train.items[order[start + i]];
                ItemGrad& g = items[i];
                EncoderCache ec;
                const Tensor emb = encoder_forward(result.encoder, sequence_matrix(seq.frames), &ec);
                Rng drop(derive_seed(derive_seed(cfg.seed, kDropoutTag), epoch, start + i));
                ClassifierCache cc;
                const Tensor logits = classifier_forward(result.classifier, emb, true, drop, &cc);
                const auto ce = nn::cross_entropy(logits, {seq.label});
                g.loss = ce.loss;
                g.correct = argmax(logits) == seq.label;
                g.classifier = zeros_like(result.classifier);
                const Tensor demb = classifier_backward(result.classifier, cc, ce.dlogits, g.classifier);
                if (!cfg.freeze_encoder) {
                    g.encoder = zeros_like(result.encoder);
                    encoder_backward(result.encoder, ec, demb, g.encoder);
                }
            });
            // Sum in item order so the update does not depend on scheduling.
            const double scale = 1.0 / static_cast<double>(b);
            ClassifierParams head_grad = zeros_like(result.classifier);
            EncoderParams enc_grad = cfg.freeze_encoder ? EncoderParams{} : zeros_like(result.encoder);
            double batch_loss = 0.0;
            for (const auto& g : items) {
                accumulate(head_grad, g.classifier, scale);
                if (!cfg.freeze_encoder) accumulate(enc_grad, g.encoder, scale);
                batch_loss += g.loss;
                hits += g.correct ? 1 : 0;
            }
            check_finite(batch_loss, step, "fine-tuning loss");
            head_opt.step(result.classifier, head_grad);
            if (!cfg.freeze_encoder) enc_opt.step(result.encoder, enc_grad);
            loss_sum += batch_loss;
            ++step;
        }
        FinetuneEpoch e;
        e.epoch = epoch;
        e.train_loss = loss_sum / static_cast<double>(n);
        e.train_accuracy = static_cast<double>(hits) / static_cast<double>(n);
        if (eval) e.eval_accuracy = classification_accuracy(result.encoder, result.classifier, *eval, cfg.threads);
        result.history.push_back(e);
    }
    return result;
}

void write_accuracy_csv(std::ostream& out, const std::vector<FinetuneEpoch>& history) {
    out << "epoch,train_loss,train_accuracy,eval_accuracy\n";
    for (const auto& e : history) {
        out << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.train_accuracy) << ',';
        if (e.eval_accuracy >= 0.0) out << fmt(e.eval_accuracy);
        out << '\n';
    }
}

void write_loss_history_csv(std::ostream& out, const std::vector<LossTerms>& history) {
    write_loss_csv_header(out);
    for (std::size_t i = 0; i < history.size(); ++i) write_loss_csv_row(out, i, history[i]);
}

namespace {

using nlohmann::json;

json encoder_json(const EncoderConfig& e) {
    return {{"input_dim", e.input_dim}, {"hidden", e.hidden}, {"d_pose", e.d_pose}, {"d_view", e.d_view}};
}

json adam_json(const AdamConfig& a) {
    return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

// Reads known keys into fields and rejects anything else.
class KeyReader {
public:
    KeyReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j.is_object()) fail(ErrorKind::Config, where_ + " must be a JSON object");
    }
    template <class T>
    KeyReader& read(const char* key, T& field) {
        seen_.push_back(key);
        if (j_.contains(key)) {
            try {
                j_.at(key).get_to(field);
            } catch (const json::exception& e) {
                fail(ErrorKind::Config, where_ + "." + key + ": " + e.what());
            }
        }
        return *this;
    }
    const json* child(const char* key) {
        seen_.push_back(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }
    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) {
                fail(ErrorKind::Config, "unknown key '" + k + "' in " + where_);
            }
        }
    }

private:
    const json& j_;
    std::string where_;
    std::vector<std::string> seen_;
};

void read_encoder(const json& j, EncoderConfig& e) {
    KeyReader(j, "encoder").read("input_dim", e.input_dim).read("hidden", e.hidden).read("d_pose", e.d_pose).read("d_view", e.d_view).finish();
}

void read_adam(const json& j, AdamConfig& a) {
    KeyReader(j, "optimizer")
        .read("learning_rate", a.learning_rate)
        .read("beta1", a.beta1)
        .read("beta2", a.beta2)
        .read("epsilon", a.epsilon)
        .finish();
}

}  // namespace

json to_json(const PretrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"optimizer", adam_json(c.optimizer)},
            {"loss",
             {{"w_pose", c.loss.w_pose},
              {"w_view", c.loss.w_view},
              {"w_reg", c.loss.w_reg},
              {"sigma_target_sq", c.loss.sigma_target_sq},
              {"bt_lambda", c.loss.bt_lambda},
              {"epsilon", c.loss.epsilon}}},
            {"augment",
             {{"jitter_variance", c.augment.jitter_variance},
              {"mask_prob", c.augment.mask_prob},
              {"flip_prob", c.augment.flip_prob},
              {"normalize_scale", c.augment.normalize_scale}}},
            {"encoder", encoder_json(c.encoder)},
            {"probe_poses", c.probe_poses},
            {"seed", c.seed},
            {"threads", c.threads}};
}

json to_json(const FinetuneConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"optimizer", adam_json(c.optimizer)},
            {"dropout1", c.dropout1},
            {"dropout2", c.dropout2},
            {"label_fraction", c.label_fraction},
            {"freeze_encoder", c.freeze_encoder},
            {"gru_hidden", c.gru_hidden},
            {"fc_hidden", c.fc_hidden},
            {"encoder", encoder_json(c.encoder)},
            {"seed", c.seed},
            {"threads", c.threads}};
}

void apply_json(const json& j, PretrainConfig& c) {
    KeyReader r(j, "pretrain config");
    r.read("epochs", c.epochs).read("batch_size", c.batch_size).read("probe_poses", c.probe_poses).read("seed", c.seed).read("threads", c.threads);
    if (const json* o = r.child("optimizer")) read_adam(*o, c.optimizer);
    if (const json* l = r.child("loss")) {
        KeyReader(*l, "loss")
            .read("w_pose", c.loss.w_pose)
            .read("w_view", c.loss.w_view)
            .read("w_reg", c.loss.w_reg)
            .read("sigma_target_sq", c.loss.sigma_target_sq)
            .read("bt_lambda", c.loss.bt_lambda)
            .read("epsilon", c.loss.epsilon)
            .finish();
    }
    if (const json* a = r.child("augment")) {
        KeyReader(*a, "augment")
            .read("jitter_variance", c.augment.jitter_variance)
            .read("mask_prob", c.augment.mask_prob)
            .read("flip_prob", c.augment.flip_prob)
            .read("normalize_scale", c.augment.normalize_scale)
            .finish();
    }
    if (const json* e = r.child("encoder")) read_encoder(*e, c.encoder);
    r.finish();
}

void apply_json(const json& j, FinetuneConfig& c) {
    KeyReader r(j, "finetune config");
    r.read("epochs", c.epochs)
        .read("batch_size", c.batch_size)
        .read("dropout1", c.dropout1)
        .read("dropout2", c.dropout2)
        .read("label_fraction", c.label_fraction)
        .read("freeze_encoder", c.freeze_encoder)
        .read("gru_hidden", c.gru_hidden)
        .read("fc_hidden", c.fc_hidden)
        .read("seed", c.seed)
        .read("threads", c.threads);
    if (const json* o = r.child("optimizer")) read_adam(*o, c.optimizer);
    if (const json* e = r.child("encoder")) read_encoder(*e, c.encoder);
    r.finish();
}

}  // namespace skatepose
