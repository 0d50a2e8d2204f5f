#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "cdtl/synthetic.hpp"
#include "cdtl/trainer.hpp"

using namespace cdtl;

namespace {

EncoderConfig tiny_encoder(std::uint32_t seed) {
    EncoderConfig cfg;
    cfg.input_h = 8;
    cfg.input_w = 8;
    cfg.conv_blocks = {{2, 3}};
    cfg.embedding_dim = 4;
    cfg.seed = seed;
    return cfg;
}

Tensor noisy_image(std::uint32_t seed, std::size_t h = 8, std::size_t w = 8) {
    Rng rng(seed);
    Tensor img({h, w, 1});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.unit());
    return img;
}

// source: one defect + one noDefect, target: one noDefect -> 1/1/1 pools in ours mode
std::pair<Dataset, Dataset> one_sample_datasets() {
    Dataset source, target;
    source.items.push_back({noisy_image(100), Label::noDefect, Domain::source, ""});
    source.items.push_back({noisy_image(101), Label::defect, Domain::source, ""});
    target.items.push_back({noisy_image(102), Label::noDefect, Domain::target, ""});
    return {source, target};
}

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 1;
    cfg.triplets_per_epoch = 1;
    cfg.optimizer.kind = OptimizerKind::sgd;
    cfg.optimizer.learning_rate = 0.05;
    cfg.mode = Mode::ours;
    return cfg;
}

}  // namespace

TEST_CASE("zero learning rate leaves the weights untouched", "[trainer]") {
    auto [source, target] = one_sample_datasets();
    TrainConfig cfg = tiny_train_config();
    cfg.optimizer.learning_rate = 0.0;
    const EncoderConfig enc = tiny_encoder(17);

    const EncoderModel initial = init_encoder(enc);
    const TrainResult result = train(source, target, enc, cfg);

    const auto wa = initial.weight_list(), wb = result.model.weight_list();
    for (std::size_t i = 0; i < wa.size(); ++i) {
        REQUIRE(wa[i]->data() == wb[i]->data());
    }
    REQUIRE(result.report.epoch_mean_loss.size() == 1);
}

TEST_CASE("one SGD step equals the analytic gradient update", "[trainer]") {
    auto [source, target] = one_sample_datasets();
    const TrainConfig cfg = tiny_train_config();
    const EncoderConfig enc = tiny_encoder(18);

    // independent computation of the same single step
    const EncoderModel initial = init_encoder(enc);
    const auto ea = embed_with_cache(initial, source.items[0].image);   // anchor: source noDefect
    const auto ep = embed_with_cache(initial, target.items[0].image);   // positive: target noDefect
    const auto en = embed_with_cache(initial, source.items[1].image);   // negative: source defect
    const auto lg = loss_and_grads(ea.embedding, ep.embedding, en.embedding, cfg.loss);
    WeightGrads expected = encoder_backward(initial, ea.caches, lg.grad_a);
    expected += encoder_backward(initial, ep.caches, lg.grad_p);
    expected += encoder_backward(initial, en.caches, lg.grad_n);

    const TrainResult result = train(source, target, enc, cfg);
    REQUIRE(result.report.epoch_mean_loss[0] == Catch::Approx(lg.loss));

    const auto w_init = initial.weight_list();
    const auto w_final = result.model.weight_list();
    const float lr = 0.05f;
    for (std::size_t i = 0; i < w_init.size(); ++i) {
        for (std::size_t k = 0; k < w_init[i]->size(); ++k) {
            const float predicted = (*w_init[i])[k] - lr * expected.tensors[i][k];
            REQUIRE((*w_final[i])[k] == Catch::Approx(predicted).margin(1e-6));
        }
    }
}

TEST_CASE("sgd step arithmetic", "[trainer]") {
    Tensor w = Tensor::vector1d({1.0f});
    Tensor g = Tensor::vector1d({0.5f});
    std::vector<Tensor*> weights{&w};
    OptimizerState state = OptimizerState::zeros_like(weights);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd;
    cfg.learning_rate = 0.1;
    optimizer_step(weights, {g}, state, cfg);
    CHECK(w[0] == Catch::Approx(0.95f));
}

TEST_CASE("adam's first bias-corrected step has magnitude ~ lr", "[trainer]") {
    for (const float scale : {1e-3f, 1.0f, 1e3f}) {
        Tensor w({4});
        Tensor g = Tensor::vector1d({scale, -scale, scale, scale});
        std::vector<Tensor*> weights{&w};
        OptimizerState state = OptimizerState::zeros_like(weights);
        OptimizerConfig cfg;  // adam defaults, lr 1e-3
        optimizer_step(weights, {g}, state, cfg);
        for (std::size_t k = 0; k < w.size(); ++k) {
            CHECK(std::abs(w[k]) == Catch::Approx(1e-3).epsilon(0.01));
        }
    }
}

TEST_CASE("adam with zero gradient only decays the moments", "[trainer]") {
    Tensor w = Tensor::vector1d({1.0f, 2.0f});
    Tensor g = Tensor::vector1d({0.5f, -0.25f});
    std::vector<Tensor*> weights{&w};
    OptimizerState state = OptimizerState::zeros_like(weights);
    OptimizerConfig cfg;
    optimizer_step(weights, {g}, state, cfg);
    const Tensor w_after_first = w;
    const float m0 = state.m[0][0], v0 = state.v[0][0];

    optimizer_step(weights, {Tensor({2})}, state, cfg);
    CHECK(state.m[0][0] == Catch::Approx(0.9f * m0));
    CHECK(state.v[0][0] == Catch::Approx(0.999f * v0));
    // weights move only by the decayed momentum, which stays tiny but nonzero;
    // with zero *state* they would not move at all
    Tensor w2 = Tensor::vector1d({1.0f});
    std::vector<Tensor*> weights2{&w2};
    OptimizerState fresh = OptimizerState::zeros_like(weights2);
    optimizer_step(weights2, {Tensor({1})}, fresh, cfg);
    CHECK(w2[0] == 1.0f);
    (void)w_after_first;
}

TEST_CASE("optimizer rejects mismatched shapes", "[trainer]") {
    Tensor w({3});
    std::vector<Tensor*> weights{&w};
    OptimizerState state = OptimizerState::zeros_like(weights);
    CHECK_THROWS_AS(optimizer_step(weights, {Tensor({4})}, state, OptimizerConfig{}), ShapeError);
}

TEST_CASE("batch gradient equals the mean of per-triplet gradients", "[trainer]") {
    // four anchors, single positive/negative: the epoch visits each anchor once
    Dataset source, target;
    for (int i = 0; i < 4; ++i) {
        source.items.push_back({noisy_image(200 + i), Label::noDefect, Domain::source, ""});
    }
    source.items.push_back({noisy_image(210), Label::defect, Domain::source, ""});
    target.items.push_back({noisy_image(211), Label::noDefect, Domain::target, ""});

    TrainConfig cfg = tiny_train_config();
    cfg.batch_size = 4;
    cfg.triplets_per_epoch = 4;
    const EncoderConfig enc = tiny_encoder(19);

    const EncoderModel initial = init_encoder(enc);
    WeightGrads mean_grads = WeightGrads::zeros_like(initial);
    for (int a = 0; a < 4; ++a) {
        const auto ea = embed_with_cache(initial, source.items[a].image);
        const auto ep = embed_with_cache(initial, target.items[0].image);
        const auto en = embed_with_cache(initial, source.items[4].image);
        const auto lg = loss_and_grads(ea.embedding, ep.embedding, en.embedding, cfg.loss);
        mean_grads += encoder_backward(initial, ea.caches, lg.grad_a);
        mean_grads += encoder_backward(initial, ep.caches, lg.grad_p);
        mean_grads += encoder_backward(initial, en.caches, lg.grad_n);
    }
    mean_grads.scale(0.25f);

    const TrainResult result = train(source, target, enc, cfg);
    const auto w_init = initial.weight_list();
    const auto w_final = result.model.weight_list();
    for (std::size_t i = 0; i < w_init.size(); ++i) {
        for (std::size_t k = 0; k < w_init[i]->size(); ++k) {
            const float predicted = (*w_init[i])[k] - 0.05f * mean_grads.tensors[i][k];
            REQUIRE((*w_final[i])[k] == Catch::Approx(predicted).margin(1e-6));
        }
    }
}

TEST_CASE("training is deterministic end to end", "[trainer]") {
    Dataset source, target;
    for (int i = 0; i < 6; ++i) {
        source.items.push_back({noisy_image(300 + i), i < 3 ? Label::defect : Label::noDefect,
                                Domain::source, ""});
        target.items.push_back({noisy_image(320 + i), Label::noDefect, Domain::target, ""});
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.triplets_per_epoch = 8;
    cfg.seed = 5;
    const EncoderConfig enc = tiny_encoder(20);

    const TrainResult a = train(source, target, enc, cfg);
    const TrainResult b = train(source, target, enc, cfg);
    CHECK(a.report.epoch_mean_loss == b.report.epoch_mean_loss);
    CHECK(serialize_checkpoint(a.model) == serialize_checkpoint(b.model));
}

TEST_CASE("exploding learning rates abort with a divergence error", "[trainer]") {
    Dataset source, target;
    for (int i = 0; i < 4; ++i) {
        source.items.push_back({noisy_image(400 + i), i < 2 ? Label::defect : Label::noDefect,
                                Domain::source, ""});
        target.items.push_back({noisy_image(420 + i), Label::noDefect, Domain::target, ""});
    }
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.triplets_per_epoch = 4;
    cfg.optimizer.kind = OptimizerKind::sgd;
    cfg.optimizer.learning_rate = 1e20;

    try {
        train(source, target, tiny_encoder(21), cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("sampler capacity errors surface from training", "[trainer]") {
    auto [source, target] = one_sample_datasets();
    TrainConfig cfg = tiny_train_config();
    cfg.triplets_per_epoch = 2;  // capacity is 1
    cfg.batch_size = 2;
    CHECK_THROWS_AS(train(source, target, tiny_encoder(22), cfg), CapacityError);
}

TEST_CASE("train config validation", "[trainer]") {
    TrainConfig cfg;
    cfg.batch_size = 300;
    cfg.triplets_per_epoch = 200;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    TrainConfig negative_lr;
    negative_lr.optimizer.learning_rate = -0.5;
    CHECK_THROWS_AS(negative_lr.validate(), ConfigError);
}

TEST_CASE("loss falls well below its starting level on the synthetic task", "[trainer][slow]") {
    const GeneratedPair pair = generate_pair(SyntheticSpec{}, 1001);
    const SplitResult source = split(pair.source, 0.8, 31);
    const SplitResult target = split(pair.target, 0.8, 31);

    TrainConfig cfg;  // desk-scale defaults, trimmed to the epoch under test
    cfg.epochs = 30;
    cfg.seed = 77;
    EncoderConfig enc;
    enc.seed = 78;

    const TrainResult result = train(source.train, target.train, enc, cfg);
    const double first = result.report.epoch_mean_loss.front();
    const double at30 = result.report.epoch_mean_loss[29];
    INFO("epoch 1 " << first << " -> epoch 30 " << at30);
    REQUIRE(first > 0.0);
    CHECK(at30 < 0.2 * first);
    for (double v : result.report.epoch_mean_loss) REQUIRE(std::isfinite(v));
}
