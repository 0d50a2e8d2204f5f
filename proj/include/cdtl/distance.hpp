#pragma once

#include <cmath>
#include <cstddef>

#include "cdtl/error.hpp"
#include "cdtl/tensor.hpp"

namespace cdtl {

// Below this distance the gradient of the euclidean distance is defined as
// zero; training drives d(A,P) toward 0, so the singular point is reachable.
inline constexpr double kDistanceEpsilon = 1e-12;

inline double euclidean_distance(const Tensor& a, const Tensor& b) {
    a.require_rank(1, "euclidean_distance a");
    b.require_rank(1, "euclidean_distance b");
    a.require_same_shape(b, "euclidean_distance");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    return std::sqrt(sum);
}

struct DistanceGrads {
    Tensor a;
    Tensor b;
};

// d = |a-b|; dd/da = (a-b)/d, dd/db = (b-a)/d, both zero when d < epsilon.
inline DistanceGrads euclidean_distance_backward(const Tensor& a, const Tensor& b, double distance,
                                                 double upstream = 1.0) {
    DistanceGrads grads{Tensor(a.shape()), Tensor(b.shape())};
    if (distance < kDistanceEpsilon) return grads;
    const double inv = upstream / distance;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const float g = static_cast<float>((static_cast<double>(a[i]) - static_cast<double>(b[i])) * inv);
        grads.a[i] = g;
        grads.b[i] = -g;
    }
    return grads;
}

}  // namespace cdtl
