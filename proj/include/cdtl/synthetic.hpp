#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cdtl/dataset.hpp"
#include "cdtl/error.hpp"
#include "cdtl/rng.hpp"
#include "cdtl/tensor.hpp"

namespace cdtl {

// Paired source/target dataset generator. The two domains get very different
// backgrounds (texture and brightness), while the defect overlay is produced
// by one shared process that differs between domains only by a bounded
// multiplicative jitter. That puts the data in the regime the classifier is
// built for: the domain gap dwarfs the class signal.

enum class BackgroundKind { stripes, gradient, blotch };

inline const char* to_string(BackgroundKind k) {
    switch (k) {
        case BackgroundKind::stripes: return "stripes";
        case BackgroundKind::gradient: return "gradient";
        default: return "blotch";
    }
}

inline BackgroundKind background_from_string(const std::string& s) {
    if (s == "stripes") return BackgroundKind::stripes;
    if (s == "gradient") return BackgroundKind::gradient;
    if (s == "blotch") return BackgroundKind::blotch;
    throw ConfigError("unknown background kind '" + s + "'");
}

struct DomainSpec {
    BackgroundKind background = BackgroundKind::stripes;
    double orientation_deg = 0.0;
    double scale = 6.0;      // stripe period / bump radius, pixels
    double contrast = 0.22;  // background amplitude around base_intensity
    double base_intensity = 0.5;
    double noise_sigma = 0.035;
    std::size_t height = 32;
    std::size_t width = 32;
    std::uint32_t seed = 0;

    void validate() const {
        if (base_intensity < 0.0 || base_intensity > 1.0) {
            throw ConfigError("domain: base_intensity must be in [0,1]");
        }
        if (noise_sigma < 0.0 || noise_sigma >= 0.5) {
            throw ConfigError("domain: noise_sigma must be in [0, 0.5)");
        }
        if (scale <= 0.0) throw ConfigError("domain: scale must be positive");
        if (contrast < 0.0) throw ConfigError("domain: contrast must be nonnegative");
        if (height < 4 || width < 4) throw ConfigError("domain: image extent too small");
    }
};

struct DefectSpec {
    std::size_t blob_count_min = 1;
    std::size_t blob_count_max = 3;
    double radius_min = 2.5;
    double radius_max = 5.0;
    double intensity_delta = -0.38;  // negative darkens
    double edge_softness = 1.5;
    double jitter = 0.2;  // per-domain multiplicative perturbation of radius and delta

    void validate() const {
        if (blob_count_min > blob_count_max) throw ConfigError("defect: blob count range inverted");
        if (radius_min <= 0.0 || radius_min > radius_max) {
            throw ConfigError("defect: radius range invalid");
        }
        if (jitter < 0.0 || jitter > 0.2) throw ConfigError("defect: jitter must be in [0, 0.2]");
        if (edge_softness < 0.0) throw ConfigError("defect: edge_softness must be nonnegative");
    }

    // Largest pixel margin a blob can need after jitter.
    std::size_t worst_margin() const {
        return static_cast<std::size_t>(std::ceil(radius_max * (1.0 + jitter))) + 1;
    }
};

struct PairCounts {
    std::size_t source_defect = 300;
    std::size_t source_no_defect = 300;
    std::size_t target_defect = 300;
    std::size_t target_no_defect = 300;

    void validate() const {
        if (source_defect < 1 || source_no_defect < 1 || target_defect < 1 ||
            target_no_defect < 1) {
            throw ConfigError("counts: at least one image per class per domain");
        }
    }
};

struct SyntheticSpec {
    DomainSpec source{BackgroundKind::stripes, 35.0, 6.0, 0.22, 0.40, 0.035, 32, 32, 0};
    DomainSpec target{BackgroundKind::blotch, 0.0, 7.0, 0.22, 0.62, 0.035, 32, 32, 1};
    DefectSpec defect;
    PairCounts counts;
};

struct GeneratedPair {
    Dataset source;
    Dataset target;
};

namespace detail {

inline void render_background(Tensor& img, const DomainSpec& spec, Rng& rng) {
    const std::size_t h = spec.height, w = spec.width;
    const double theta = spec.orientation_deg * 3.14159265358979323846 / 180.0;

    switch (spec.background) {
        case BackgroundKind::stripes: {
            const double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            const double sx = std::sin(theta), cy = std::cos(theta);
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const double p = static_cast<double>(x) * sx + static_cast<double>(y) * cy;
                    img.at(y, x, 0) = static_cast<float>(
                        spec.base_intensity +
                        spec.contrast * std::sin(2.0 * 3.14159265358979323846 * p / spec.scale + phase));
                }
            }
            break;
        }
        case BackgroundKind::gradient: {
            const double jitter = rng.uniform(-0.26, 0.26);  // ~15 degrees
            const double sign = rng.unit() < 0.5 ? -1.0 : 1.0;
            const double sx = std::sin(theta + jitter), cy = std::cos(theta + jitter);
            double pmin = 0.0, pmax = 0.0;
            bool first = true;
            for (double yy : {0.0, static_cast<double>(h - 1)}) {
                for (double xx : {0.0, static_cast<double>(w - 1)}) {
                    const double p = xx * sx + yy * cy;
                    if (first || p < pmin) pmin = p;
                    if (first || p > pmax) pmax = p;
                    first = false;
                }
            }
            const double span = pmax - pmin > 1e-9 ? pmax - pmin : 1.0;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const double p = static_cast<double>(x) * sx + static_cast<double>(y) * cy;
                    const double t = (p - pmin) / span;
                    img.at(y, x, 0) =
                        static_cast<float>(spec.base_intensity + sign * spec.contrast * (2.0 * t - 1.0));
                }
            }
            break;
        }
        case BackgroundKind::blotch: {
            img.fill(static_cast<float>(spec.base_intensity));
            constexpr std::size_t bumps = 6;
            for (std::size_t j = 0; j < bumps; ++j) {
                const double cx = rng.uniform(0.0, static_cast<double>(w - 1));
                const double cyp = rng.uniform(0.0, static_cast<double>(h - 1));
                const double sigma = spec.scale * rng.uniform(0.6, 1.4);
                // Alternate bump signs so the image mean stays near base_intensity.
                const double amp = spec.contrast * rng.uniform(0.5, 1.0) * (j % 2 == 0 ? 1.0 : -1.0);
                const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        const double dx = static_cast<double>(x) - cx;
                        const double dy = static_cast<double>(y) - cyp;
                        img.at(y, x, 0) +=
                            static_cast<float>(amp * std::exp(-(dx * dx + dy * dy) * inv2s2));
                    }
                }
            }
            break;
        }
    }

    // Recenter so the texture carries the domain's look while the global
    // brightness stays pinned at base_intensity; without this the blotch
    // bumps would drift the image mean and drown the defect's mean shift.
    double mean = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) mean += img[i];
    mean /= static_cast<double>(img.size());
    const float shift = static_cast<float>(spec.base_intensity - mean);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += shift;

    if (spec.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < img.size(); ++i) {
            img[i] += static_cast<float>(rng.normal(0.0, spec.noise_sigma));
        }
    }
}

struct DomainJitter {
    double radius_factor = 1.0;
    double delta_factor = 1.0;
};

inline void render_blobs(Tensor& img, const DefectSpec& spec, const DomainJitter& jitter,
                         Rng& rng) {
    const std::size_t h = img.extent(0), w = img.extent(1);
    const std::size_t count =
        spec.blob_count_min + rng.below(spec.blob_count_max - spec.blob_count_min + 1);
    for (std::size_t b = 0; b < count; ++b) {
        const double radius = rng.uniform(spec.radius_min, spec.radius_max) * jitter.radius_factor;
        const double delta = spec.intensity_delta * jitter.delta_factor;
        const auto margin = static_cast<std::size_t>(std::ceil(radius)) + 1;
        const std::size_t cx = margin + rng.below(w - 2 * margin);
        const std::size_t cy = margin + rng.below(h - 2 * margin);
        const double soft = std::max(spec.edge_softness, 1e-6);
        const auto y0 = cy - margin, y1 = cy + margin;
        const auto x0 = cx - margin, x1 = cx + margin;
        for (std::size_t y = y0; y <= y1; ++y) {
            for (std::size_t x = x0; x <= x1; ++x) {
                const double dx = static_cast<double>(x) - static_cast<double>(cx);
                const double dy = static_cast<double>(y) - static_cast<double>(cy);
                const double d = std::sqrt(dx * dx + dy * dy);
                const double f = std::clamp((radius - d) / soft, 0.0, 1.0);
                img.at(y, x, 0) += static_cast<float>(delta * f);
            }
        }
    }
}

inline void quantize8(Tensor& img) {
    for (std::size_t i = 0; i < img.size(); ++i) {
        const float v = std::clamp(img[i], 0.0f, 1.0f);
        img[i] = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
    }
}

inline Dataset generate_domain(const DomainSpec& spec, const DefectSpec& defect,
                               std::size_t n_no_defect, std::size_t n_defect, Domain domain,
                               std::uint64_t pair_seed) {
    const std::uint32_t root =
        mix_seed((pair_seed << 32) | spec.seed, domain == Domain::source ? 0xA0 : 0xA1);
    Rng domain_rng(mix_seed(root, 0xB10B));
    const DomainJitter jitter{1.0 + defect.jitter * (2.0 * domain_rng.unit() - 1.0),
                              1.0 + defect.jitter * (2.0 * domain_rng.unit() - 1.0)};

    Dataset out;
    auto make_image = [&](std::size_t index, bool with_blobs) {
        Tensor img({spec.height, spec.width, 1});
        Rng bg_rng(mix_seed(root, 0x10000 + index));
        render_background(img, spec, bg_rng);
        if (with_blobs) {
            Rng blob_rng(mix_seed(root, 0x20000 + index));
            render_blobs(img, defect, jitter, blob_rng);
        }
        quantize8(img);
        return img;
    };

    char buf[64];
    for (std::size_t i = 0; i < n_no_defect; ++i) {
        std::snprintf(buf, sizeof(buf), "%s_noDefect_%04zu.pgm", to_string(domain), i);
        out.items.push_back({make_image(i, false), Label::noDefect, domain, buf});
    }
    for (std::size_t i = 0; i < n_defect; ++i) {
        std::snprintf(buf, sizeof(buf), "%s_defect_%04zu.pgm", to_string(domain), i);
        out.items.push_back({make_image(i, true), Label::defect, domain, buf});
    }
    return out;
}

}  // namespace detail

inline GeneratedPair generate_pair(const DomainSpec& source_spec, const DomainSpec& target_spec,
                                   const DefectSpec& defect_spec, const PairCounts& counts,
                                   std::uint32_t seed) {
    source_spec.validate();
    target_spec.validate();
    defect_spec.validate();
    counts.validate();
    for (const DomainSpec* spec : {&source_spec, &target_spec}) {
        if (2 * defect_spec.worst_margin() >= std::min(spec->height, spec->width)) {
            throw ConfigError("defect blobs (radius up to " + std::to_string(defect_spec.radius_max) +
                              ") do not fit inside " + std::to_string(spec->height) + "x" +
                              std::to_string(spec->width) + " images");
        }
    }

    GeneratedPair pair;
    pair.source = detail::generate_domain(source_spec, defect_spec, counts.source_no_defect,
                                          counts.source_defect, Domain::source, seed);
    pair.target = detail::generate_domain(target_spec, defect_spec, counts.target_no_defect,
                                          counts.target_defect, Domain::target, seed);
    return pair;
}

inline GeneratedPair generate_pair(const SyntheticSpec& spec, std::uint32_t seed) {
    return generate_pair(spec.source, spec.target, spec.defect, spec.counts, seed);
}

// Pixel-wise mean of a set of equally shaped images.
inline Tensor mean_image(const std::vector<Tensor>& images) {
    if (images.empty()) throw InputError("mean_image: empty set");
    Tensor mean(images.front().shape());
    std::vector<double> acc(mean.size(), 0.0);
    for (const Tensor& img : images) {
        img.require_same_shape(mean, "mean_image");
        for (std::size_t i = 0; i < img.size(); ++i) acc[i] += img[i];
    }
    for (std::size_t i = 0; i < mean.size(); ++i) {
        mean[i] = static_cast<float>(acc[i] / static_cast<double>(images.size()));
    }
    return mean;
}

inline double mean_abs_diff(const Tensor& a, const Tensor& b) {
    a.require_same_shape(b, "mean_abs_diff");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    }
    return sum / static_cast<double>(a.size());
}

}  // namespace cdtl
