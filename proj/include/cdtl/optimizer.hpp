#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cdtl/error.hpp"
#include "cdtl/tensor.hpp"

namespace cdtl {

enum class OptimizerKind { sgd, adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (learning_rate < 0.0) throw ConfigError("optimizer: learning rate must be >= 0");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
            throw ConfigError("optimizer: betas must be in [0,1)");
        }
        if (eps <= 0.0) throw ConfigError("optimizer: eps must be positive");
    }
};

struct OptimizerState {
    std::vector<Tensor> m;  // first moments (adam)
    std::vector<Tensor> v;  // second moments (adam)
    std::uint64_t step = 0;

    static OptimizerState zeros_like(const std::vector<Tensor*>& weights) {
        OptimizerState s;
        for (const Tensor* w : weights) {
            s.m.emplace_back(w->shape());
            s.v.emplace_back(w->shape());
        }
        return s;
    }
};

// One update over all weight tensors. SGD: w -= lr * g. Adam: standard moment
// updates with bias correction.
inline void optimizer_step(const std::vector<Tensor*>& weights, const std::vector<Tensor>& grads,
                           OptimizerState& state, const OptimizerConfig& cfg) {
    if (weights.size() != grads.size()) {
        throw ShapeError("optimizer_step: " + std::to_string(weights.size()) + " weights vs " +
                         std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i]->require_same_shape(grads[i], "optimizer_step");
    }

    if (cfg.kind == OptimizerKind::sgd) {
        const auto lr = static_cast<float>(cfg.learning_rate);
        for (std::size_t i = 0; i < weights.size(); ++i) {
            Tensor& w = *weights[i];
            const Tensor& g = grads[i];
            for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
        }
        ++state.step;
        return;
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < weights.size(); ++i) {
        Tensor& w = *weights[i];
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k];
            const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            m[k] = static_cast<float>(mk);
            v[k] = static_cast<float>(vk);
            w[k] -= static_cast<float>(cfg.learning_rate * (mk / bc1) /
                                       (std::sqrt(vk / bc2) + cfg.eps));
        }
    }
}

}  // namespace cdtl
