#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cdtl/error.hpp"
#include "cdtl/tensor.hpp"

namespace cdtl {

// Explicit forward/backward pairs for the fixed layer set the encoder is built
// from. Each forward returns the value plus a cache; the matching backward
// consumes that cache. Caches are plain values, so everything here is a pure
// function and safe to call concurrently.
//
// Layout conventions:
//   images/activations  H x W x C   (row-major, channels last)
//   conv kernels        k x k x Cin x Cout
//   dense weights       n x m

enum class Padding { valid, same };

inline const char* to_string(Padding p) { return p == Padding::valid ? "valid" : "same"; }

struct ConvGeometry {
    std::size_t out_h = 0, out_w = 0;
    std::size_t pad_top = 0, pad_left = 0;
};

inline ConvGeometry conv_geometry(std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
                                  Padding padding) {
    if (stride < 1) throw InputError("conv2d: stride must be >= 1");
    ConvGeometry g;
    if (padding == Padding::valid) {
        if (k > h || k > w) {
            throw ShapeError("conv2d: kernel " + std::to_string(k) + " exceeds input " +
                             std::to_string(h) + "x" + std::to_string(w) + " (valid padding)");
        }
        g.out_h = (h - k) / stride + 1;
        g.out_w = (w - k) / stride + 1;
    } else {
        g.out_h = (h + stride - 1) / stride;
        g.out_w = (w + stride - 1) / stride;
        const std::size_t need_h = (g.out_h - 1) * stride + k;
        const std::size_t need_w = (g.out_w - 1) * stride + k;
        g.pad_top = need_h > h ? (need_h - h) / 2 : 0;
        g.pad_left = need_w > w ? (need_w - w) / 2 : 0;
    }
    return g;
}

struct Conv2dCache {
    Tensor input;
    Tensor kernels;
    std::size_t stride = 1;
    Padding padding = Padding::valid;
    ConvGeometry geometry;
};

struct Conv2dResult {
    Tensor output;
    Conv2dCache cache;
};

struct Conv2dGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

inline Conv2dResult conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                                   std::size_t stride, Padding padding) {
    input.require_rank(3, "conv2d input");
    kernels.require_rank(4, "conv2d kernels");
    bias.require_rank(1, "conv2d bias");

    const std::size_t h = input.extent(0), w = input.extent(1), cin = input.extent(2);
    const std::size_t k = kernels.extent(0);
    if (kernels.extent(1) != k) throw ShapeError("conv2d: kernels must be square");
    if (kernels.extent(2) != cin) {
        throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels, kernels expect " +
                         std::to_string(kernels.extent(2)));
    }
    const std::size_t cout = kernels.extent(3);
    if (bias.extent(0) != cout) throw ShapeError("conv2d: bias length must equal output channels");

    const ConvGeometry g = conv_geometry(h, w, k, stride, padding);

    Tensor output({g.out_h, g.out_w, cout});
    std::vector<double> acc(cout);
    const float* in = input.data().data();
    const float* ker = kernels.data().data();

    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            for (std::size_t co = 0; co < cout; ++co) acc[co] = bias[co];
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    const float* in_px = in + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
                    const float* k_px = ker + (ky * k + kx) * cin * cout;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double a = in_px[ci];
                        const float* k_row = k_px + ci * cout;
                        for (std::size_t co = 0; co < cout; ++co) acc[co] += a * k_row[co];
                    }
                }
            }
            float* out_px = &output.at(oy, ox, 0);
            for (std::size_t co = 0; co < cout; ++co) out_px[co] = static_cast<float>(acc[co]);
        }
    }

    return {std::move(output), Conv2dCache{input, kernels, stride, padding, g}};
}

inline Conv2dGrads conv2d_backward(const Tensor& grad_out, const Conv2dCache& cache) {
    const Tensor& input = cache.input;
    const Tensor& kernels = cache.kernels;
    const ConvGeometry& g = cache.geometry;
    const std::size_t h = input.extent(0), w = input.extent(1), cin = input.extent(2);
    const std::size_t k = kernels.extent(0);
    const std::size_t cout = kernels.extent(3);

    grad_out.require_rank(3, "conv2d grad_out");
    if (grad_out.extent(0) != g.out_h || grad_out.extent(1) != g.out_w ||
        grad_out.extent(2) != cout) {
        throw ShapeError("conv2d grad_out shape " + grad_out.shape_string() +
                         " does not match forward output");
    }

    Conv2dGrads grads{Tensor(input.shape()), Tensor(kernels.shape()), Tensor({cout})};
    const float* in = input.data().data();
    const float* ker = kernels.data().data();
    float* g_in = grads.input.data().data();
    float* g_ker = grads.kernels.data().data();

    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const float* go = &grad_out.at(oy, ox, 0);
            for (std::size_t co = 0; co < cout; ++co) grads.bias[co] += go[co];
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(oy * cache.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox * cache.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    const std::size_t px = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
                    const std::size_t kbase = (ky * k + kx) * cin * cout;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const float a = in[px + ci];
                        const float* k_row = ker + kbase + ci * cout;
                        float* gk_row = g_ker + kbase + ci * cout;
                        float gi = 0.0f;
                        for (std::size_t co = 0; co < cout; ++co) {
                            gk_row[co] += a * go[co];
                            gi += k_row[co] * go[co];
                        }
                        g_in[px + ci] += gi;
                    }
                }
            }
        }
    }
    return grads;
}

struct ReluCache {
    Tensor input;
};

struct ReluResult {
    Tensor output;
    ReluCache cache;
};

inline ReluResult relu_forward(const Tensor& input) {
    Tensor output(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        output[i] = input[i] > 0.0f ? input[i] : 0.0f;
    }
    return {std::move(output), ReluCache{input}};
}

// Subgradient at 0 is 0: gradient flows only where the input was strictly positive.
inline Tensor relu_backward(const Tensor& grad_out, const ReluCache& cache) {
    grad_out.require_same_shape(cache.input, "relu grad_out");
    Tensor grad_in(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        grad_in[i] = cache.input[i] > 0.0f ? grad_out[i] : 0.0f;
    }
    return grad_in;
}

struct Maxpool2Cache {
    std::vector<std::size_t> input_shape;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

struct Maxpool2Result {
    Tensor output;
    Maxpool2Cache cache;
};

// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
// Window ties route to the first element in row-major window order.
inline Maxpool2Result maxpool2_forward(const Tensor& input) {
    input.require_rank(3, "maxpool2 input");
    const std::size_t h = input.extent(0), w = input.extent(1), c = input.extent(2);
    if (h < 2 || w < 2) {
        throw ShapeError("maxpool2: input " + input.shape_string() + " is smaller than 2x2");
    }
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor output({oh, ow, c});
    Maxpool2Cache cache{input.shape(), std::vector<std::size_t>(oh * ow * c)};

    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::size_t best = ((oy * 2) * w + ox * 2) * c + ch;
                float best_v = input[best];
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = ((oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                        if (input[idx] > best_v) {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                }
                output.at(oy, ox, ch) = best_v;
                cache.argmax[(oy * ow + ox) * c + ch] = best;
            }
        }
    }
    return {std::move(output), std::move(cache)};
}

inline Tensor maxpool2_backward(const Tensor& grad_out, const Maxpool2Cache& cache) {
    const std::size_t oh = cache.input_shape[0] / 2;
    const std::size_t ow = cache.input_shape[1] / 2;
    const std::size_t c = cache.input_shape[2];
    if (grad_out.rank() != 3 || grad_out.extent(0) != oh || grad_out.extent(1) != ow ||
        grad_out.extent(2) != c) {
        throw ShapeError("maxpool2 grad_out shape " + grad_out.shape_string() +
                         " does not match forward output");
    }
    Tensor grad_in(cache.input_shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        grad_in[cache.argmax[i]] += grad_out[i];
    }
    return grad_in;
}

struct DenseCache {
    Tensor input;
    Tensor weights;
};

struct DenseResult {
    Tensor output;
    DenseCache cache;
};

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

inline DenseResult dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    input.require_rank(1, "dense input");
    weights.require_rank(2, "dense weights");
    bias.require_rank(1, "dense bias");
    const std::size_t n = input.extent(0), m = weights.extent(1);
    if (weights.extent(0) != n) {
        throw ShapeError("dense: input length " + std::to_string(n) + " vs weight rows " +
                         std::to_string(weights.extent(0)));
    }
    if (bias.extent(0) != m) throw ShapeError("dense: bias length must equal output width");

    std::vector<double> acc(m);
    for (std::size_t j = 0; j < m; ++j) acc[j] = bias[j];
    for (std::size_t i = 0; i < n; ++i) {
        const double a = input[i];
        const float* row = &weights.at(i, 0);
        for (std::size_t j = 0; j < m; ++j) acc[j] += a * row[j];
    }
    Tensor output({m});
    for (std::size_t j = 0; j < m; ++j) output[j] = static_cast<float>(acc[j]);
    return {std::move(output), DenseCache{input, weights}};
}

inline DenseGrads dense_backward(const Tensor& grad_out, const DenseCache& cache) {
    const std::size_t n = cache.input.extent(0), m = cache.weights.extent(1);
    if (grad_out.rank() != 1 || grad_out.extent(0) != m) {
        throw ShapeError("dense grad_out shape " + grad_out.shape_string() +
                         " does not match forward output");
    }
    DenseGrads grads{Tensor({n}), Tensor(cache.weights.shape()), grad_out};
    for (std::size_t i = 0; i < n; ++i) {
        const float a = cache.input[i];
        const float* w_row = &cache.weights.at(i, 0);
        float* gw_row = &grads.weights.at(i, 0);
        float gi = 0.0f;
        for (std::size_t j = 0; j < m; ++j) {
            gw_row[j] = a * grad_out[j];
            gi += w_row[j] * grad_out[j];
        }
        grads.input[i] = gi;
    }
    return grads;
}

}  // namespace cdtl
