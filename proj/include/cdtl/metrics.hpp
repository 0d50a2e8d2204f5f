#pragma once

#include <optional>

#include "cdtl/classifier.hpp"

namespace cdtl {

// Rates under the noDefect-is-Positive convention. Ratios with a zero
// denominator are undefined (reported as null), never coerced to 0.
struct Metrics {
    std::optional<double> precision;  // tp / (tp + fp)
    std::optional<double> recall;     // tp / (tp + fn)
    std::optional<double> tp_rate;    // tp / (tp + fn), share of true noDefect
    std::optional<double> fn_rate;    // fn / (tp + fn)
    std::optional<double> tn_rate;    // tn / (tn + fp), share of true defect
    std::optional<double> fp_rate;    // fp / (tn + fp)
};

inline Metrics metrics(const ConfusionCounts& c) {
    auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    Metrics m;
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    m.tp_rate = ratio(c.tp, c.tp + c.fn);
    m.fn_rate = ratio(c.fn, c.tp + c.fn);
    m.tn_rate = ratio(c.tn, c.tn + c.fp);
    m.fp_rate = ratio(c.fp, c.tn + c.fp);
    return m;
}

}  // namespace cdtl
