#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cdtl/encoder.hpp"
#include "cdtl/error.hpp"
#include "cdtl/optimizer.hpp"
#include "cdtl/sampler.hpp"
#include "cdtl/triplet_loss.hpp"

namespace cdtl {

// Table 1's loss/mode coupling: the proposed setup uses the modified loss,
// both benchmarks the basic one.
inline LossVariant loss_variant_for(Mode mode) {
    return mode == Mode::ours ? LossVariant::modified : LossVariant::basic;
}

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 60;
    std::size_t triplets_per_epoch = 200;
    LossConfig loss;
    OptimizerConfig optimizer;
    std::uint32_t seed = 0;
    Mode mode = Mode::ours;
    bool balance_union = false;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (batch_size > triplets_per_epoch) {
            throw ConfigError("train: batch_size must not exceed triplets_per_epoch");
        }
        loss.validate();
        optimizer.validate();
    }
};

struct TrainReport {
    std::vector<double> epoch_mean_loss;
    double wall_seconds = 0.0;
};

struct TrainResult {
    EncoderModel model;
    TrainReport report;
};

// Mini-batch training loop. Each triplet contributes three forward/backward
// passes through the shared-weight encoder; their weight gradients are summed,
// then averaged over the batch before the optimizer step. Fully deterministic
// given the encoder seed and cfg.seed.
inline TrainResult train_on_pools(const TrainingPools& pools, const EncoderConfig& encoder_config,
                                  const TrainConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    EncoderModel model = init_encoder(encoder_config);
    OptimizerState opt_state = OptimizerState::zeros_like(model.weight_list());
    TripletSet used;
    TrainReport report;
    report.epoch_mean_loss.reserve(cfg.epochs);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<Triplet> triplets =
            sample_epoch(pools.handles, cfg.triplets_per_epoch, mix_seed(cfg.seed, epoch), used);

        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < triplets.size(); start += cfg.batch_size) {
            ++batch_index;
            const std::size_t end = std::min(start + cfg.batch_size, triplets.size());
            const auto batch_n = static_cast<float>(end - start);

            WeightGrads grads = WeightGrads::zeros_like(model);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const Triplet& t = triplets[i];
                EmbedWithCache a = embed_with_cache(model, pools.anchors[t.a_idx]);
                EmbedWithCache p = embed_with_cache(model, pools.positives[t.p_idx]);
                EmbedWithCache n = embed_with_cache(model, pools.negatives[t.n_idx]);
                if (!a.embedding.all_finite() || !p.embedding.all_finite() ||
                    !n.embedding.all_finite()) {
                    throw DivergenceError("training diverged: non-finite embedding at epoch " +
                                          std::to_string(epoch) + ", batch " +
                                          std::to_string(batch_index));
                }
                TripletLossResult lr = loss_and_grads(a.embedding, p.embedding, n.embedding, cfg.loss);
                batch_loss += lr.loss;
                grads += encoder_backward(model, a.caches, lr.grad_a);
                grads += encoder_backward(model, p.caches, lr.grad_p);
                grads += encoder_backward(model, n.caches, lr.grad_n);
            }
            if (!std::isfinite(batch_loss)) {
                throw DivergenceError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(batch_index));
            }
            epoch_loss += batch_loss;
            grads.scale(1.0f / batch_n);
            std::vector<Tensor*> weights = model.weight_list();
            optimizer_step(weights, grads.tensors, opt_state, cfg.optimizer);
        }

        for (const Tensor* w : model.weight_list()) {
            if (!w->all_finite()) {
                throw DivergenceError("training diverged: non-finite weights after epoch " +
                                      std::to_string(epoch));
            }
        }
        report.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(triplets.size()));
    }

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(model), std::move(report)};
}

inline TrainResult train(const Dataset& source_train, const Dataset& target_train,
                         const EncoderConfig& encoder_config, const TrainConfig& cfg) {
    const TrainingPools pools =
        benchmark_pools(cfg.mode, source_train, target_train, cfg.balance_union);
    return train_on_pools(pools, encoder_config, cfg);
}

}  // namespace cdtl
