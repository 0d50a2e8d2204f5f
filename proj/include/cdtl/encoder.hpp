#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdtl/bytes.hpp"
#include "cdtl/distance.hpp"
#include "cdtl/error.hpp"
#include "cdtl/layers.hpp"
#include "cdtl/rng.hpp"
#include "cdtl/tensor.hpp"

namespace cdtl {

// The trainable CNN encoder: a stack of conv -> ReLU -> maxpool blocks
// (stride-1 same-padding convolutions), a dense layer down to the embedding,
// and an optional two-layer projection head.

using Embedding = Tensor;

struct ConvBlockSpec {
    std::size_t filters = 8;
    std::size_t kernel_size = 3;

    friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

struct ProjectionSpec {
    std::size_t hidden_dim = 32;
    std::size_t output_dim = 32;

    friend bool operator==(const ProjectionSpec&, const ProjectionSpec&) = default;
};

struct EncoderConfig {
    std::size_t input_h = 32;
    std::size_t input_w = 32;
    std::size_t input_c = 1;
    std::vector<ConvBlockSpec> conv_blocks = {{8, 3}, {16, 3}};
    std::size_t embedding_dim = 64;
    std::optional<ProjectionSpec> projection;
    bool normalize_embedding = false;
    std::uint32_t seed = 0;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;

    void validate() const {
        if (input_h < 1 || input_w < 1 || input_c < 1) {
            throw ConfigError("encoder: input extents must be positive");
        }
        if (embedding_dim < 2) throw ConfigError("encoder: embedding_dim must be >= 2");
        if (conv_blocks.empty()) throw ConfigError("encoder: at least one conv block required");
        std::size_t h = input_h, w = input_w;
        for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
            const auto& b = conv_blocks[i];
            if (b.filters < 1 || b.kernel_size < 1) {
                throw ConfigError("encoder: conv block " + std::to_string(i) +
                                  " has non-positive filters or kernel size");
            }
            if (h < 2 || w < 2) {
                throw ConfigError("encoder: pooling chain exhausts spatial extent at block " +
                                  std::to_string(i) + " (" + std::to_string(h) + "x" +
                                  std::to_string(w) + " before pool)");
            }
            h /= 2;
            w /= 2;
        }
        if (projection) {
            if (projection->hidden_dim < 1 || projection->output_dim < 1) {
                throw ConfigError("encoder: projection head dims must be positive");
            }
        }
    }

    // Spatial extents after all blocks (same-padding conv keeps size, pool halves).
    std::pair<std::size_t, std::size_t> final_spatial() const {
        std::size_t h = input_h, w = input_w;
        for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
            h /= 2;
            w /= 2;
        }
        return {h, w};
    }

    std::size_t flat_features() const {
        auto [h, w] = final_spatial();
        return h * w * conv_blocks.back().filters;
    }

    // Length of the vector embed() returns.
    std::size_t output_dim() const {
        return projection ? projection->output_dim : embedding_dim;
    }
};

struct ConvBlockWeights {
    Tensor kernels;  // k x k x cin x filters
    Tensor bias;     // filters
};

struct ProjectionWeights {
    Tensor hidden_weights;  // embedding_dim x hidden_dim
    Tensor hidden_bias;
    Tensor output_weights;  // hidden_dim x output_dim
    Tensor output_bias;
};

struct EncoderModel {
    EncoderConfig config;
    std::vector<ConvBlockWeights> blocks;
    Tensor dense_weights;  // flat_features x embedding_dim
    Tensor dense_bias;
    std::optional<ProjectionWeights> projection;

    // Weights in the fixed order used by checkpoints and the optimizer.
    std::vector<Tensor*> weight_list() {
        std::vector<Tensor*> list;
        for (auto& b : blocks) {
            list.push_back(&b.kernels);
            list.push_back(&b.bias);
        }
        list.push_back(&dense_weights);
        list.push_back(&dense_bias);
        if (projection) {
            list.push_back(&projection->hidden_weights);
            list.push_back(&projection->hidden_bias);
            list.push_back(&projection->output_weights);
            list.push_back(&projection->output_bias);
        }
        return list;
    }

    std::vector<const Tensor*> weight_list() const {
        std::vector<const Tensor*> list;
        for (const auto& b : blocks) {
            list.push_back(&b.kernels);
            list.push_back(&b.bias);
        }
        list.push_back(&dense_weights);
        list.push_back(&dense_bias);
        if (projection) {
            list.push_back(&projection->hidden_weights);
            list.push_back(&projection->hidden_bias);
            list.push_back(&projection->output_weights);
            list.push_back(&projection->output_bias);
        }
        return list;
    }

    std::vector<std::string> weight_names() const {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            names.push_back("conv_block" + std::to_string(i) + ".kernels");
            names.push_back("conv_block" + std::to_string(i) + ".bias");
        }
        names.push_back("dense.weights");
        names.push_back("dense.bias");
        if (projection) {
            names.push_back("projection.hidden_weights");
            names.push_back("projection.hidden_bias");
            names.push_back("projection.output_weights");
            names.push_back("projection.output_bias");
        }
        return names;
    }
};

// Expected weight shapes, fully determined by the config.
inline std::vector<std::vector<std::size_t>> weight_shapes(const EncoderConfig& cfg) {
    std::vector<std::vector<std::size_t>> shapes;
    std::size_t cin = cfg.input_c;
    for (const auto& b : cfg.conv_blocks) {
        shapes.push_back({b.kernel_size, b.kernel_size, cin, b.filters});
        shapes.push_back({b.filters});
        cin = b.filters;
    }
    shapes.push_back({cfg.flat_features(), cfg.embedding_dim});
    shapes.push_back({cfg.embedding_dim});
    if (cfg.projection) {
        shapes.push_back({cfg.embedding_dim, cfg.projection->hidden_dim});
        shapes.push_back({cfg.projection->hidden_dim});
        shapes.push_back({cfg.projection->hidden_dim, cfg.projection->output_dim});
        shapes.push_back({cfg.projection->output_dim});
    }
    return shapes;
}

namespace detail {

inline Tensor he_normal(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<float>(rng.normal(0.0, stddev));
    }
    return t;
}

}  // namespace detail

// He-style initialization: weights ~ N(0, sqrt(2/fan_in)), biases zero,
// fully determined by config.seed.
inline EncoderModel init_encoder(const EncoderConfig& cfg) {
    cfg.validate();
    EncoderModel model;
    model.config = cfg;
    Rng rng(cfg.seed);

    std::size_t cin = cfg.input_c;
    for (const auto& b : cfg.conv_blocks) {
        const std::size_t fan_in = b.kernel_size * b.kernel_size * cin;
        ConvBlockWeights w;
        w.kernels = detail::he_normal({b.kernel_size, b.kernel_size, cin, b.filters}, fan_in, rng);
        w.bias = Tensor({b.filters});
        model.blocks.push_back(std::move(w));
        cin = b.filters;
    }

    const std::size_t flat = cfg.flat_features();
    model.dense_weights = detail::he_normal({flat, cfg.embedding_dim}, flat, rng);
    model.dense_bias = Tensor({cfg.embedding_dim});

    if (cfg.projection) {
        ProjectionWeights p;
        p.hidden_weights =
            detail::he_normal({cfg.embedding_dim, cfg.projection->hidden_dim}, cfg.embedding_dim, rng);
        p.hidden_bias = Tensor({cfg.projection->hidden_dim});
        p.output_weights = detail::he_normal({cfg.projection->hidden_dim, cfg.projection->output_dim},
                                             cfg.projection->hidden_dim, rng);
        p.output_bias = Tensor({cfg.projection->output_dim});
        model.projection = std::move(p);
    }
    return model;
}

struct NormalizeCache {
    Tensor pre_norm;
    double norm = 0.0;
};

struct EncoderCaches {
    std::vector<Conv2dCache> conv;
    std::vector<ReluCache> relu;
    std::vector<Maxpool2Cache> pool;
    DenseCache dense;
    std::optional<DenseCache> proj_hidden;
    std::optional<ReluCache> proj_relu;
    std::optional<DenseCache> proj_output;
    std::optional<NormalizeCache> normalize;
};

namespace detail {

inline void check_image(const EncoderModel& model, const Tensor& image) {
    if (image.rank() != 3 || image.extent(0) != model.config.input_h ||
        image.extent(1) != model.config.input_w || image.extent(2) != model.config.input_c) {
        throw ShapeError("embed: image shape " + image.shape_string() + " does not match input " +
                         std::to_string(model.config.input_h) + "x" +
                         std::to_string(model.config.input_w) + "x" +
                         std::to_string(model.config.input_c));
    }
    if (!image.all_finite()) throw InputError("embed: image contains non-finite values");
}

inline Embedding forward(const EncoderModel& model, const Tensor& image, EncoderCaches* caches) {
    check_image(model, image);

    Tensor x = image;
    for (const auto& block : model.blocks) {
        Conv2dResult conv = conv2d_forward(x, block.kernels, block.bias, 1, Padding::same);
        ReluResult act = relu_forward(conv.output);
        Maxpool2Result pooled = maxpool2_forward(act.output);
        x = std::move(pooled.output);
        if (caches) {
            caches->conv.push_back(std::move(conv.cache));
            caches->relu.push_back(std::move(act.cache));
            caches->pool.push_back(std::move(pooled.cache));
        }
    }

    DenseResult dense = dense_forward(x.flattened(), model.dense_weights, model.dense_bias);
    Tensor out = std::move(dense.output);
    if (caches) caches->dense = std::move(dense.cache);

    if (model.projection) {
        DenseResult hidden =
            dense_forward(out, model.projection->hidden_weights, model.projection->hidden_bias);
        ReluResult act = relu_forward(hidden.output);
        DenseResult proj =
            dense_forward(act.output, model.projection->output_weights, model.projection->output_bias);
        out = std::move(proj.output);
        if (caches) {
            caches->proj_hidden = std::move(hidden.cache);
            caches->proj_relu = std::move(act.cache);
            caches->proj_output = std::move(proj.cache);
        }
    }

    if (model.config.normalize_embedding) {
        double sum = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) sum += static_cast<double>(out[i]) * out[i];
        const double norm = std::sqrt(sum);
        if (caches) caches->normalize = NormalizeCache{out, norm};
        if (norm > kDistanceEpsilon) {
            const float inv = static_cast<float>(1.0 / norm);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
        }
    }
    return out;
}

}  // namespace detail

inline Embedding embed(const EncoderModel& model, const Tensor& image) {
    return detail::forward(model, image, nullptr);
}

struct EmbedWithCache {
    Embedding embedding;
    EncoderCaches caches;
};

inline EmbedWithCache embed_with_cache(const EncoderModel& model, const Tensor& image) {
    EmbedWithCache r;
    r.embedding = detail::forward(model, image, &r.caches);
    return r;
}

// Per-weight gradients, aligned with EncoderModel::weight_list() order.
struct WeightGrads {
    std::vector<Tensor> tensors;

    static WeightGrads zeros_like(const EncoderModel& model) {
        WeightGrads g;
        for (const Tensor* w : model.weight_list()) g.tensors.emplace_back(w->shape());
        return g;
    }

    WeightGrads& operator+=(const WeightGrads& other) {
        for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i] += other.tensors[i];
        return *this;
    }

    WeightGrads& scale(float f) {
        for (auto& t : tensors) t.scale(f);
        return *this;
    }
};

// Backpropagates a gradient on the embedding through one cached forward pass.
inline WeightGrads encoder_backward(const EncoderModel& model, const EncoderCaches& caches,
                                    const Tensor& grad_embedding) {
    WeightGrads grads = WeightGrads::zeros_like(model);
    Tensor g = grad_embedding;

    if (model.config.normalize_embedding) {
        const NormalizeCache& nc = *caches.normalize;
        if (nc.norm > kDistanceEpsilon) {
            // y = x / |x|  =>  dx = (g - (g . y) y) / |x|
            double dot = 0.0;
            const double inv = 1.0 / nc.norm;
            std::vector<double> y(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                y[i] = nc.pre_norm[i] * inv;
                dot += static_cast<double>(g[i]) * y[i];
            }
            Tensor gx(g.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] = static_cast<float>((g[i] - dot * y[i]) * inv);
            }
            g = std::move(gx);
        } else {
            g.fill(0.0f);
        }
    }

    std::size_t wi = grads.tensors.size();
    if (model.projection) {
        DenseGrads d2 = dense_backward(g, *caches.proj_output);
        grads.tensors[wi - 1] += d2.bias;
        grads.tensors[wi - 2] += d2.weights;
        Tensor gh = relu_backward(d2.input, *caches.proj_relu);
        DenseGrads d1 = dense_backward(gh, *caches.proj_hidden);
        grads.tensors[wi - 3] += d1.bias;
        grads.tensors[wi - 4] += d1.weights;
        g = std::move(d1.input);
        wi -= 4;
    }

    DenseGrads dd = dense_backward(g, caches.dense);
    grads.tensors[wi - 1] += dd.bias;
    grads.tensors[wi - 2] += dd.weights;
    wi -= 2;

    // Reshape the flat gradient back to the last pooled activation.
    const Maxpool2Cache& last_pool = caches.pool.back();
    Tensor gx({last_pool.input_shape[0] / 2, last_pool.input_shape[1] / 2, last_pool.input_shape[2]},
              dd.input.data());

    for (std::size_t bi = model.blocks.size(); bi-- > 0;) {
        Tensor g_act = maxpool2_backward(gx, caches.pool[bi]);
        Tensor g_conv = relu_backward(g_act, caches.relu[bi]);
        Conv2dGrads cg = conv2d_backward(g_conv, caches.conv[bi]);
        grads.tensors[2 * bi] += cg.kernels;
        grads.tensors[2 * bi + 1] += cg.bias;
        gx = std::move(cg.input);
    }
    return grads;
}

// --- checkpoint persistence ------------------------------------------------
//
// Layout: magic "CDTL", u32 LE version (1), u32 LE config blob length, the
// UTF-8 JSON config, then each weight tensor in weight_list() order as
// u32 LE rank, rank x u32 LE extents, f32 LE row-major values.

inline constexpr char kCheckpointMagic[4] = {'C', 'D', 'T', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::ordered_json encoder_config_to_json(const EncoderConfig& cfg) {
    nlohmann::ordered_json j;
    j["input"] = {cfg.input_h, cfg.input_w, cfg.input_c};
    nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
    for (const auto& b : cfg.conv_blocks) blocks.push_back({b.filters, b.kernel_size});
    j["conv_blocks"] = std::move(blocks);
    j["embedding_dim"] = cfg.embedding_dim;
    if (cfg.projection) {
        j["projection"] = {{"hidden_dim", cfg.projection->hidden_dim},
                           {"output_dim", cfg.projection->output_dim}};
    } else {
        j["projection"] = nullptr;
    }
    j["normalize_embedding"] = cfg.normalize_embedding;
    j["seed"] = cfg.seed;
    return j;
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
    EncoderConfig cfg;
    try {
        const auto& input = j.at("input");
        cfg.input_h = input.at(0).get<std::size_t>();
        cfg.input_w = input.at(1).get<std::size_t>();
        cfg.input_c = input.at(2).get<std::size_t>();
        cfg.conv_blocks.clear();
        for (const auto& b : j.at("conv_blocks")) {
            cfg.conv_blocks.push_back({b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>()});
        }
        cfg.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        if (j.contains("projection") && !j.at("projection").is_null()) {
            cfg.projection = ProjectionSpec{j.at("projection").at("hidden_dim").get<std::size_t>(),
                                            j.at("projection").at("output_dim").get<std::size_t>()};
        }
        cfg.normalize_embedding = j.value("normalize_embedding", false);
        cfg.seed = j.value("seed", 0u);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint config blob: ") + e.what());
    }
    return cfg;
}

inline std::vector<std::uint8_t> serialize_checkpoint(const EncoderModel& model) {
    ByteWriter w;
    w.bytes(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    const std::string blob = encoder_config_to_json(model.config).dump();
    w.u32(static_cast<std::uint32_t>(blob.size()));
    w.text(blob);
    for (const Tensor* t : model.weight_list()) {
        w.u32(static_cast<std::uint32_t>(t->rank()));
        for (std::size_t d = 0; d < t->rank(); ++d) {
            w.u32(static_cast<std::uint32_t>(t->extent(d)));
        }
        for (float v : t->data()) w.f32(v);
    }
    return w.buffer();
}

inline void save_checkpoint(const EncoderModel& model, const std::string& path) {
    write_file(path, serialize_checkpoint(model));
}

inline EncoderModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes, "checkpoint");
    const std::string magic = r.text(4, "magic");
    if (magic != std::string(kCheckpointMagic, 4)) {
        throw FormatError("checkpoint magic: expected \"CDTL\", got \"" + magic + "\"");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version: expected 1, got " + std::to_string(version));
    }
    const std::uint32_t blob_len = r.u32("config blob length");
    const std::string blob = r.text(blob_len, "config blob");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(blob);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint config blob: ") + e.what());
    }
    EncoderConfig cfg = encoder_config_from_json(j);
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config blob: ") + e.what());
    }

    // Build an empty model with the declared structure, then fill weights.
    EncoderModel model;
    model.config = cfg;
    std::size_t cin = cfg.input_c;
    for (const auto& b : cfg.conv_blocks) {
        model.blocks.push_back(
            {Tensor({b.kernel_size, b.kernel_size, cin, b.filters}), Tensor({b.filters})});
        cin = b.filters;
    }
    model.dense_weights = Tensor({cfg.flat_features(), cfg.embedding_dim});
    model.dense_bias = Tensor({cfg.embedding_dim});
    if (cfg.projection) {
        model.projection =
            ProjectionWeights{Tensor({cfg.embedding_dim, cfg.projection->hidden_dim}),
                              Tensor({cfg.projection->hidden_dim}),
                              Tensor({cfg.projection->hidden_dim, cfg.projection->output_dim}),
                              Tensor({cfg.projection->output_dim})};
    }

    const auto names = model.weight_names();
    auto tensors = model.weight_list();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const std::string where = "tensor " + std::to_string(i) + " (" + names[i] + ")";
        const std::uint32_t rank = r.u32(where + " rank");
        if (rank != tensors[i]->rank()) {
            throw FormatError(where + ": rank " + std::to_string(rank) + ", expected " +
                              std::to_string(tensors[i]->rank()));
        }
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t extent = r.u32(where + " extent " + std::to_string(d));
            if (extent != tensors[i]->extent(d)) {
                throw FormatError(where + ": extent " + std::to_string(d) + " is " +
                                  std::to_string(extent) + ", expected " +
                                  std::to_string(tensors[i]->extent(d)));
            }
        }
        for (std::size_t k = 0; k < tensors[i]->size(); ++k) {
            (*tensors[i])[k] = r.f32(where + " values");
        }
    }
    r.expect_end();
    return model;
}

inline EncoderModel load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file(path));
}

inline Digest model_fingerprint(const EncoderModel& model) {
    return digest32(serialize_checkpoint(model));
}

}  // namespace cdtl
