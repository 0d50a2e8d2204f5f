#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "cdtl/dataset.hpp"
#include "cdtl/error.hpp"
#include "cdtl/rng.hpp"
#include "cdtl/tensor.hpp"

namespace cdtl {

// Builds the training triplets. The only hard rule, enforced across an entire
// run via the `used` set, is that no (anchor, positive, negative) index triple
// is ever emitted twice.

struct Triplet {
    std::size_t a_idx = 0;
    std::size_t p_idx = 0;
    std::size_t n_idx = 0;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletHash {
    std::size_t operator()(const Triplet& t) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (std::uint64_t v : {static_cast<std::uint64_t>(t.a_idx),
                                static_cast<std::uint64_t>(t.p_idx),
                                static_cast<std::uint64_t>(t.n_idx)}) {
            h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            h *= 0x100000001b3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

using TripletSet = std::unordered_set<Triplet, TripletHash>;

struct PoolHandles {
    std::size_t anchor_count = 0;
    std::size_t positive_count = 0;
    std::size_t negative_count = 0;
    // Set when anchors and positives are the same pool (bench setups); a
    // triplet may then never use one sample as both anchor and positive.
    bool forbid_anchor_equals_positive = false;
    // bench2 only: anchors/positives are the concatenation source++target with
    // this many source items first. With balance_union the sampler picks the
    // side with probability 1/2 instead of uniformly over the concatenation.
    std::size_t union_boundary = 0;
    bool balance_union = false;

    void validate() const {
        if (anchor_count < 1 || positive_count < 1 || negative_count < 1) {
            throw InputError("sampler: all pool sizes must be >= 1");
        }
    }
};

namespace detail {

inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
        return std::numeric_limits<std::uint64_t>::max();
    }
    return a * b;
}

}  // namespace detail

// Number of distinct constellations these pools admit.
inline std::uint64_t constellation_capacity(const PoolHandles& pools) {
    std::uint64_t cap = detail::saturating_mul(
        detail::saturating_mul(pools.anchor_count, pools.positive_count), pools.negative_count);
    if (pools.forbid_anchor_equals_positive) {
        const std::uint64_t diagonal = detail::saturating_mul(
            std::min(pools.anchor_count, pools.positive_count), pools.negative_count);
        cap = cap > diagonal ? cap - diagonal : 0;
    }
    return cap;
}

// Draws n_triplets fresh constellations, uniformly at random given the seed,
// distinct from everything in `used` and from each other; the new triples are
// added to `used`. Duplicate avoidance is plain rejection sampling, which is
// cheap as long as the used set stays well below capacity.
inline std::vector<Triplet> sample_epoch(const PoolHandles& pools, std::size_t n_triplets,
                                         std::uint32_t seed, TripletSet& used) {
    pools.validate();
    const std::uint64_t capacity = constellation_capacity(pools);
    const std::uint64_t remaining = capacity > used.size() ? capacity - used.size() : 0;
    if (n_triplets > remaining) {
        throw CapacityError("sampler: requested " + std::to_string(n_triplets) +
                                " triplets but only " + std::to_string(remaining) +
                                " distinct constellations remain (capacity " +
                                std::to_string(capacity) + ", used " + std::to_string(used.size()) +
                                ")",
                            remaining);
    }

    Rng rng(seed);
    auto draw_union = [&rng](const PoolHandles& p, std::size_t count) {
        if (p.balance_union && p.union_boundary > 0 && p.union_boundary < count) {
            const std::size_t source_n = p.union_boundary;
            const std::size_t target_n = count - source_n;
            return rng.unit() < 0.5 ? rng.below(source_n) : source_n + rng.below(target_n);
        }
        return rng.below(count);
    };

    std::vector<Triplet> out;
    out.reserve(n_triplets);
    while (out.size() < n_triplets) {
        Triplet t;
        t.a_idx = draw_union(pools, pools.anchor_count);
        t.p_idx = draw_union(pools, pools.positive_count);
        t.n_idx = rng.below(pools.negative_count);
        if (pools.forbid_anchor_equals_positive && t.a_idx == t.p_idx) continue;
        if (!used.insert(t).second) continue;
        out.push_back(t);
    }
    return out;
}

// --- benchmark pool setups ----------------------------------------------------

// The three dataset constellations under comparison. `ours` trains with the
// modified loss, the bench modes with the basic loss.
enum class Mode { ours, bench1, bench2 };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::ours: return "ours";
        case Mode::bench1: return "bench1";
        default: return "bench2";
    }
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "ours") return Mode::ours;
    if (s == "bench1") return Mode::bench1;
    if (s == "bench2") return Mode::bench2;
    throw ConfigError("unknown mode '" + s + "' (expected ours, bench1, or bench2)");
}

struct TrainingPools {
    std::vector<Tensor> anchors;
    std::vector<Tensor> positives;
    std::vector<Tensor> negatives;
    PoolHandles handles;
};

// Pool composition per mode:
//   ours    A: source noDefect   P: target noDefect          N: source defect
//   bench1  A: source noDefect   P: same source pool         N: source defect
//   bench2  A and P: source noDefect ++ target noDefect      N: source defect
// bench1/bench2 share one pool for A and P, so a triplet may never pair a
// sample with itself; the sampler enforces that via the handles.
inline TrainingPools benchmark_pools(Mode mode, const Dataset& source_train,
                                     const Dataset& target_train, bool balance_union = false) {
    TrainingPools pools;
    const std::vector<Tensor> source_no_def = source_train.images_with(Label::noDefect);
    const std::vector<Tensor> source_def = source_train.images_with(Label::defect);
    const std::vector<Tensor> target_no_def = target_train.images_with(Label::noDefect);

    if (source_no_def.empty()) throw DatasetError("source dataset has no noDefect samples");
    if (source_def.empty()) throw DatasetError("source dataset has no defect samples");
    if (mode != Mode::bench1 && target_no_def.empty()) {
        throw DatasetError("target dataset has no noDefect samples");
    }

    switch (mode) {
        case Mode::ours:
            pools.anchors = source_no_def;
            pools.positives = target_no_def;
            break;
        case Mode::bench1:
            pools.anchors = source_no_def;
            pools.positives = source_no_def;
            pools.handles.forbid_anchor_equals_positive = true;
            break;
        case Mode::bench2: {
            std::vector<Tensor> unioned = source_no_def;
            unioned.insert(unioned.end(), target_no_def.begin(), target_no_def.end());
            pools.anchors = unioned;
            pools.positives = std::move(unioned);
            pools.handles.forbid_anchor_equals_positive = true;
            pools.handles.union_boundary = source_no_def.size();
            pools.handles.balance_union = balance_union;
            break;
        }
    }
    pools.negatives = source_def;
    pools.handles.anchor_count = pools.anchors.size();
    pools.handles.positive_count = pools.positives.size();
    pools.handles.negative_count = pools.negatives.size();
    return pools;
}

}  // namespace cdtl
