#pragma once

#include "skatepose/camera.hpp"
#include "skatepose/dataset.hpp"
#include "skatepose/losses.hpp"
#include "skatepose/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace skatepose {

struct PretrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    AdamConfig optimizer;
    LossConfig loss;
    AugmentConfig augment;
    EncoderConfig encoder;
    std::size_t probe_poses = 100;  // training poses re-projected for the per-epoch probe
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const;
};

struct PretrainResult {
    EncoderParams encoder;
    std::vector<LossTerms> history;  // one entry per optimizer step
    std::vector<double> probe;       // one entry per epoch
};

using EpochCallback =
    std::function<void(std::size_t epoch, double mean_loss, double probe, const EncoderParams& encoder)>;

// Contrastive pre-training on canonical poses. Each epoch shuffles the poses,
// builds one augmented pair per pose from seeds derived from (seed, epoch,
// position) and takes one optimizer step per batch. `init` overrides the
// seeded initialization.
PretrainResult pretrain_encoder(const std::vector<CanonicalPose>& poses, const PretrainConfig& cfg,
                                const EncoderParams* init = nullptr, const EpochCallback& on_epoch = {});

EncoderParams initial_encoder(const EncoderConfig& cfg, std::uint64_t seed);

// Frames of one sequence as a T x 2N matrix.
Tensor sequence_matrix(const std::vector<Pose2D>& frames);

// Per-frame encoder output, T x d.
Tensor embed_sequence(const EncoderParams& params, const std::vector<Pose2D>& frames);

struct ViewInvarianceReport {
    std::size_t poses = 0;
    double top1_retrieval = 0.0;         // nearest neighbor by Euclidean distance
    double top1_retrieval_cosine = 0.0;  // nearest neighbor by cosine similarity
    double same_pose_cosine = 0.0;
    double different_pose_cosine = 0.0;
    double probe = 0.0;  // same minus different
};

// Projects every pose from two fresh random cameras (no jitter or masking)
// and compares the z_pose parts of their embeddings. Retrieval queries each
// first-view embedding against all second-view embeddings.
ViewInvarianceReport evaluate_view_invariance(const EncoderParams& params, const std::vector<CanonicalPose>& poses,
                                              std::uint64_t seed);

struct FinetuneConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    AdamConfig optimizer;
    double dropout1 = 0.5;
    double dropout2 = 0.5;
    double label_fraction = 1.0;
    bool freeze_encoder = false;
    std::size_t gru_hidden = 128;
    std::size_t fc_hidden = 128;
    EncoderConfig encoder;  // used when no pretrained encoder is given
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const;
};

struct FinetuneEpoch {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double eval_accuracy = -1.0;  // -1 when no evaluation set was given
};

struct FinetuneResult {
    EncoderParams encoder;
    ClassifierParams classifier;
    std::vector<std::size_t> subset;  // indices into the training set
    std::vector<FinetuneEpoch> history;
    std::vector<std::string> warnings;
};

// Nested stratified subsample: per class, a seeded permutation of that
// class's items, keeping the first max(1, ceil(fraction * n_c)). Smaller
// fractions give prefixes of larger ones for the same seed.
std::vector<std::size_t> stratified_subsample(const LabeledSequenceDataset& data, double fraction, std::uint64_t seed,
                                              std::vector<std::string>* warnings = nullptr);

// Encoder -> BiGRU x2 -> max pool -> FC head, trained with cross-entropy.
// Without `pretrained` the encoder starts from a seeded random init.
FinetuneResult finetune_classifier(const EncoderParams* pretrained, const LabeledSequenceDataset& train,
                                   const FinetuneConfig& cfg, const LabeledSequenceDataset* eval = nullptr);

std::size_t predict(const EncoderParams& encoder, const ClassifierParams& classifier, const std::vector<Pose2D>& frames);
std::vector<std::size_t> predict_all(const EncoderParams& encoder, const ClassifierParams& classifier,
                                     const LabeledSequenceDataset& data, std::size_t threads = 1);
double classification_accuracy(const EncoderParams& encoder, const ClassifierParams& classifier,
                               const LabeledSequenceDataset& data, std::size_t threads = 1);

void write_accuracy_csv(std::ostream& out, const std::vector<FinetuneEpoch>& history);
void write_loss_history_csv(std::ostream& out, const std::vector<LossTerms>& history);

nlohmann::json to_json(const PretrainConfig& cfg);
nlohmann::json to_json(const FinetuneConfig& cfg);
// Missing keys keep their defaults; unknown keys are a Config error.
void apply_json(const nlohmann::json& j, PretrainConfig& cfg);
void apply_json(const nlohmann::json& j, FinetuneConfig& cfg);

}  // namespace skatepose
