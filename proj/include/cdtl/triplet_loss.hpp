#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cdtl/distance.hpp"
#include "cdtl/error.hpp"
#include "cdtl/tensor.hpp"

namespace cdtl {

enum class LossVariant { basic, modified };

inline const char* to_string(LossVariant v) {
    return v == LossVariant::basic ? "basic" : "modified";
}

struct LossConfig {
    LossVariant variant = LossVariant::modified;
    double m1 = 0.2;
    double m2 = 0.2;  // ignored by the basic variant

    void validate() const {
        if (m1 < 0.0 || m2 < 0.0) throw ConfigError("loss margins must be nonnegative");
    }
};

struct TripletDistances {
    double d_ap = 0.0;
    double d_an = 0.0;
    double d_pn = 0.0;
};

inline void require_valid(const TripletDistances& d) {
    if (d.d_ap < 0.0 || d.d_an < 0.0 || d.d_pn < 0.0) {
        throw InputError("triplet distances must be nonnegative");
    }
    if (!std::isfinite(d.d_ap) || !std::isfinite(d.d_an) || !std::isfinite(d.d_pn)) {
        throw InputError("triplet distances must be finite");
    }
}

// Hinge pulling d(A,P) below d(A,N) by margin m1. d_pn is ignored.
inline double basic_loss(const TripletDistances& d, const LossConfig& cfg) {
    require_valid(d);
    return std::max(d.d_ap - d.d_an + cfg.m1, 0.0);
}

// Basic hinge plus a second hinge pushing d(P,N) above d(A,P) by margin m2,
// which blocks the shortcut of encoding domain rather than class.
inline double modified_loss(const TripletDistances& d, const LossConfig& cfg) {
    require_valid(d);
    return std::max(d.d_ap - d.d_an + cfg.m1, 0.0) + std::max(d.d_ap - d.d_pn + cfg.m2, 0.0);
}

inline double triplet_loss(const TripletDistances& d, const LossConfig& cfg) {
    return cfg.variant == LossVariant::basic ? basic_loss(d, cfg) : modified_loss(d, cfg);
}

struct TripletLossResult {
    double loss = 0.0;
    Tensor grad_a;
    Tensor grad_p;
    Tensor grad_n;
};

// Loss of one embedding triplet plus gradients with respect to all three
// embeddings. Distances are recomputed here so the gradient path is
// self-contained. At an exactly-zero hinge the subgradient is 0.
inline TripletLossResult loss_and_grads(const Tensor& a, const Tensor& p, const Tensor& n,
                                        const LossConfig& cfg) {
    a.require_same_shape(p, "loss_and_grads a/p");
    a.require_same_shape(n, "loss_and_grads a/n");

    TripletDistances d;
    d.d_ap = euclidean_distance(a, p);
    d.d_an = euclidean_distance(a, n);
    d.d_pn = euclidean_distance(p, n);

    TripletLossResult r;
    r.grad_a = Tensor(a.shape());
    r.grad_p = Tensor(p.shape());
    r.grad_n = Tensor(n.shape());
    r.loss = triplet_loss(d, cfg);

    const bool hinge1 = d.d_ap - d.d_an + cfg.m1 > 0.0;
    const bool hinge2 = cfg.variant == LossVariant::modified && d.d_ap - d.d_pn + cfg.m2 > 0.0;

    if (hinge1 || hinge2) {
        const double w_ap = (hinge1 ? 1.0 : 0.0) + (hinge2 ? 1.0 : 0.0);
        const DistanceGrads g_ap = euclidean_distance_backward(a, p, d.d_ap, w_ap);
        r.grad_a += g_ap.a;
        r.grad_p += g_ap.b;
    }
    if (hinge1) {
        const DistanceGrads g_an = euclidean_distance_backward(a, n, d.d_an, -1.0);
        r.grad_a += g_an.a;
        r.grad_n += g_an.b;
    }
    if (hinge2) {
        const DistanceGrads g_pn = euclidean_distance_backward(p, n, d.d_pn, -1.0);
        r.grad_p += g_pn.a;
        r.grad_n += g_pn.b;
    }
    return r;
}

struct EmbeddingTriplet {
    Tensor a;
    Tensor p;
    Tensor n;
};

struct BatchLossResult {
    double mean_loss = 0.0;
    std::vector<TripletLossResult> per_triplet;  // gradients already scaled by 1/batch
};

inline BatchLossResult batch_loss(const std::vector<EmbeddingTriplet>& batch,
                                  const LossConfig& cfg) {
    if (batch.empty()) throw InputError("batch_loss: empty batch");
    BatchLossResult r;
    r.per_triplet.reserve(batch.size());
    const float inv = 1.0f / static_cast<float>(batch.size());
    for (const auto& t : batch) {
        TripletLossResult item = loss_and_grads(t.a, t.p, t.n, cfg);
        r.mean_loss += item.loss;
        item.grad_a.scale(inv);
        item.grad_p.scale(inv);
        item.grad_n.scale(inv);
        r.per_triplet.push_back(std::move(item));
    }
    r.mean_loss /= static_cast<double>(batch.size());
    return r;
}

}  // namespace cdtl
