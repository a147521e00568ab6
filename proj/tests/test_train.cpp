#include "support.hpp"

#include "skatepose/error.hpp"
#include "skatepose/synth.hpp"
#include "skatepose/train.hpp"

#include <doctest.h>

#include <numeric>
#include <set>
#include <thread>
#include <sstream>

using namespace skatepose;
using namespace skatepose::testing;

namespace {

template <class P>
bool same_params(const P& a, const P& b) {
    const auto x = tensor_list(a), y = tensor_list(b);
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i]->data != y[i]->data) return false;
    }
    return true;
}

std::vector<CanonicalPose> pool(std::size_t n, std::uint64_t seed) {
    return generate_pose_pool(n, 3, 32, 0.005, RansacConfig{}, seed);
}

PretrainConfig small_pretrain() {
    PretrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.encoder.hidden = {32};
    cfg.encoder.d_pose = 8;
    cfg.encoder.d_view = 4;
    cfg.probe_poses = 10;
    return cfg;
}

SynthDataset small_dataset(std::size_t per_class, std::uint64_t seed) {
    SynthConfig sc;
    sc.n_per_class = per_class;
    sc.pool_size = 1;
    sc.seed = seed;
    return generate_dataset(sc);
}

FinetuneConfig small_finetune() {
    FinetuneConfig cfg;
    cfg.epochs = 2;
    cfg.gru_hidden = 8;
    cfg.fc_hidden = 8;
    cfg.encoder.hidden = {32};
    cfg.encoder.d_pose = 8;
    cfg.encoder.d_view = 4;
    return cfg;
}

double mean_total(const std::vector<LossTerms>& h, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += h[i].total;
    return s / static_cast<double>(end - begin);
}

}  // namespace

TEST_CASE("pretraining with zero learning rate leaves the encoder unchanged") {
    auto cfg = small_pretrain();
    cfg.optimizer.learning_rate = 0.0;
    const auto poses = pool(64, 1);
    const auto r = pretrain_encoder(poses, cfg);
    CHECK(same_params(r.encoder, initial_encoder(cfg.encoder, cfg.seed)));
    CHECK(r.history.size() == 2 * 4);
    CHECK(r.probe.size() == 2);
}

TEST_CASE("pretraining is deterministic and thread-count independent") {
    auto cfg = small_pretrain();
    const auto poses = pool(80, 2);
    const auto a = pretrain_encoder(poses, cfg);
    const auto b = pretrain_encoder(poses, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].total == b.history[i].total);
    CHECK(same_params(a.encoder, b.encoder));

    cfg.threads = 4;
    const auto c = pretrain_encoder(poses, cfg);
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(c.history[i].total == doctest::Approx(a.history[i].total).epsilon(1e-9));
    }

    cfg.threads = 1;
    cfg.seed = 5;
    const auto d = pretrain_encoder(poses, cfg);
    CHECK_FALSE(d.history.front().total == a.history.front().total);

    std::size_t calls = 0;
    pretrain_encoder(poses, small_pretrain(), nullptr,
                     [&](std::size_t epoch, double loss, double, const EncoderParams&) {
                         CHECK(epoch == calls++);
                         CHECK(std::isfinite(loss));
                     });
    CHECK(calls == 2);
}

TEST_CASE("pretraining halves the loss on 2000 poses") {
    const auto poses = pool(2000, 0);
    PretrainConfig cfg;
    const auto r = pretrain_encoder(poses, cfg);
    const std::size_t per_epoch = (poses.size() + cfg.batch_size - 1) / cfg.batch_size;
    REQUIRE(r.history.size() == per_epoch * cfg.epochs);
    const double first = mean_total(r.history, 0, per_epoch);
    const double last = r.history.back().total;
    MESSAGE("epoch-1 mean " << first << ", final " << last);
    CHECK(last <= 0.5 * first);
    CHECK(r.probe.back() > r.probe.front());
}

TEST_CASE("embed_sequence examples") {
    const auto enc = initial_encoder(EncoderConfig{}, 3);
    Rng rng(4);
    std::vector<Pose2D> frames;
    for (int t = 0; t < 5; ++t) {
        Pose2D p;
        p.coords.resize(17, 2);
        for (Eigen::Index j = 0; j < 17; ++j) p.coords.row(j) = Eigen::RowVector2d(rng.normal(), rng.normal());
        p.mask.assign(17, false);
        frames.push_back(p);
    }
    const auto one = embed_sequence(enc, {frames[0]});
    const auto direct = encoder_forward(enc, sequence_matrix({frames[0]}));
    REQUIRE(one.rows() == 1);
    CHECK(one.data == direct.data);

    const auto dup = embed_sequence(enc, {frames[1], frames[1]});
    for (std::size_t k = 0; k < dup.cols(); ++k) CHECK(dup(0, k) == dup(1, k));

    const auto all = embed_sequence(enc, frames);
    const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
    std::vector<Pose2D> shuffled;
    for (auto i : perm) shuffled.push_back(frames[i]);
    const auto permuted = embed_sequence(enc, shuffled);
    for (std::size_t r = 0; r < perm.size(); ++r) {
        for (std::size_t k = 0; k < all.cols(); ++k) CHECK(permuted(r, k) == all(perm[r], k));
    }
    CHECK(embed_sequence(enc, frames).data == all.data);
}

TEST_CASE("stratified subsample is nested and balanced") {
    const auto d = small_dataset(40, 0);
    for (std::uint64_t seed : {0u, 7u}) {
        std::vector<std::size_t> previous;
        for (double f : {0.01, 0.1, 0.5, 1.0}) {
            std::vector<std::string> warnings;
            const auto s = stratified_subsample(d.train, f, seed, &warnings);
            std::set<std::size_t> have(s.begin(), s.end());
            CHECK(have.size() == s.size());
            for (auto i : previous) CHECK(have.count(i) == 1);
            std::vector<std::size_t> per_class(3, 0);
            for (auto i : s) ++per_class[d.train.items[i].label];
            const auto counts = d.train.class_counts();
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(per_class[c] ==
                      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(f * static_cast<double>(counts[c])))));
            }
            previous = s;
        }
    }
    CHECK_THROWS_AS(stratified_subsample(d.train, 0.0, 0), Error);
}

TEST_CASE("fine-tuning with zero learning rate leaves parameters unchanged") {
    const auto d = small_dataset(6, 1);
    auto cfg = small_finetune();
    cfg.optimizer.learning_rate = 0.0;
    const auto enc = initial_encoder(cfg.encoder, 9);
    const auto r = finetune_classifier(&enc, d.train, cfg, &d.test);
    CHECK(same_params(r.encoder, enc));
    cfg.batch_size = 0;
    CHECK_THROWS_AS(finetune_classifier(&enc, d.train, cfg), Error);
    cfg.batch_size = 8;
    cfg.epochs = 1;
    const auto init = finetune_classifier(&enc, d.train, cfg);
    CHECK(same_params(init.classifier, r.classifier));
    const double acc = classification_accuracy(r.encoder, r.classifier, d.test);
    CHECK(acc == doctest::Approx(r.history.back().eval_accuracy));
}

TEST_CASE("fine-tuning is bit-identical across thread counts") {
    const auto d = small_dataset(6, 2);
    auto cfg = small_finetune();
    const auto a = finetune_classifier(nullptr, d.train, cfg, &d.test);
    cfg.threads = 3;
    const auto b = finetune_classifier(nullptr, d.train, cfg, &d.test);
    CHECK(same_params(a.encoder, b.encoder));
    CHECK(same_params(a.classifier, b.classifier));
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(predict_all(a.encoder, a.classifier, d.test, 1) == predict_all(a.encoder, a.classifier, d.test, 4));

    cfg.freeze_encoder = true;
    const auto enc = initial_encoder(cfg.encoder, 4);
    const auto frozen = finetune_classifier(&enc, d.train, cfg);
    CHECK(same_params(frozen.encoder, enc));
}

TEST_CASE("full-label fine-tuning separates the synthetic classes") {
    const auto d = small_dataset(60, 3);
    FinetuneConfig cfg;
    cfg.gru_hidden = 32;
    cfg.fc_hidden = 32;
    cfg.threads = std::max(1u, std::thread::hardware_concurrency());
    const auto r = finetune_classifier(nullptr, d.train, cfg, &d.test);
    MESSAGE("held-out accuracy " << r.history.back().eval_accuracy);
    CHECK(r.history.back().eval_accuracy >= 0.9);
}

TEST_CASE("config json round trips and rejects unknown keys") {
    PretrainConfig p;
    p.epochs = 7;
    p.encoder.hidden = {10, 12};
    PretrainConfig p2;
    apply_json(to_json(p), p2);
    CHECK(to_json(p2) == to_json(p));
    CHECK_THROWS_AS(apply_json(nlohmann::json{{"epoch", 3}}, p2), Error);

    FinetuneConfig f;
    f.label_fraction = 0.1;
    f.freeze_encoder = true;
    FinetuneConfig f2;
    apply_json(to_json(f), f2);
    CHECK(to_json(f2) == to_json(f));
    CHECK_THROWS_AS(apply_json(nlohmann::json{{"bogus", true}}, f2), Error);

    std::ostringstream csv;
    write_accuracy_csv(csv, {{1, 0.5, 0.25, 0.75}});
    CHECK(csv.str().find("epoch") == 0);
}
