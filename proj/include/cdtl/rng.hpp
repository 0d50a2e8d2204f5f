#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cdtl {

// Mixes a seed with a stream tag so sub-components get independent,
// reproducible streams from one master seed.
inline std::uint32_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z = z ^ (z >> 31);
    return static_cast<std::uint32_t>(z ^ (z >> 32));
}

// Deterministic random source. std::mt19937 output is fully specified by the
// standard; the distributions are hand-rolled here because the std ones are
// implementation-defined and would break bit-reproducibility across stdlibs.
class Rng {
public:
    explicit Rng(std::uint32_t seed) : gen_(seed) {}

    std::uint32_t next_u32() { return gen_(); }

    // Uniform in [0, 1).
    double unit() { return static_cast<double>(gen_()) * 0x1.0p-32; }

    // Uniform integer in [0, n). Rejection keeps the draw unbiased.
    std::size_t below(std::size_t n) {
        if (n <= 1) return 0;
        const std::uint64_t span = 0x100000000ULL;
        const std::uint64_t limit = span - span % n;
        std::uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return static_cast<std::size_t>(v % n);
    }

    // Standard normal via Box-Muller, one cached value.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = unit();  // avoid log(0)
        const double u2 = unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

private:
    std::mt19937 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cdtl
