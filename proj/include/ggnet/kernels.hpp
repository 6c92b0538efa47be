#pragma once

// Differentiable dense kernels over NCHW tensors. Every forward op has an
// explicit backward that takes the forward inputs and the upstream gradient.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ggnet/errors.hpp"
#include "ggnet/tensor.hpp"

namespace ggnet {

template <typename Scalar>
struct ConvParams {
    Tensor<Scalar> weight; // (out_ch, in_ch, k, k)
    VectorX<Scalar> bias;  // out_ch
    int stride = 1;
    int padding = 0;

    ConvParams() = default;
    ConvParams(int out_ch, int in_ch, int kernel, int stride_ = 1, int padding_ = -1)
        : weight(out_ch, in_ch, kernel, kernel),
          bias(VectorX<Scalar>::Zero(out_ch)),
          stride(stride_),
          padding(padding_ < 0 ? kernel / 2 : padding_) {}

    [[nodiscard]] int out_channels() const { return weight.batch(); }
    [[nodiscard]] int in_channels() const { return weight.channels(); }
    [[nodiscard]] int kernel() const { return weight.height(); }

    template <typename Other>
    [[nodiscard]] ConvParams<Other> cast() const {
        ConvParams<Other> p;
        p.weight = weight.template cast<Other>();
        p.bias = bias.template cast<Other>();
        p.stride = stride;
        p.padding = padding;
        return p;
    }
};

template <typename Scalar>
struct ConvGrads {
    Tensor<Scalar> input;
    Tensor<Scalar> weight;
    VectorX<Scalar> bias;
};

inline int conv_output_size(int in, int kernel, int stride, int padding) {
    const int span = in + 2 * padding - kernel;
    if (stride <= 0 || span < 0) return 0;
    return span / stride + 1;
}

namespace detail {

template <typename Scalar>
void check_conv(const Tensor<Scalar>& input, const ConvParams<Scalar>& p) {
    if (p.weight.height() != p.weight.width()) {
        throw ConfigError("conv kernels must be square, got " + p.weight.shape().str());
    }
    if (input.channels() != p.in_channels()) {
        throw DimensionError("conv2d: input has " + std::to_string(input.channels()) + " channels, kernel expects " +
                             std::to_string(p.in_channels()));
    }
    if (p.bias.size() != p.out_channels()) {
        throw DimensionError("conv2d: bias length " + std::to_string(p.bias.size()) + " != out channels " +
                             std::to_string(p.out_channels()));
    }
    if (p.stride <= 0 || p.padding < 0) {
        throw ConfigError("conv2d: stride must be positive and padding nonnegative");
    }
    const int ho = conv_output_size(input.height(), p.kernel(), p.stride, p.padding);
    const int wo = conv_output_size(input.width(), p.kernel(), p.stride, p.padding);
    if (ho <= 0 || wo <= 0) {
        throw ConfigError("conv2d: zero-sized output for input " + input.shape().str() + " kernel " +
                          std::to_string(p.kernel()) + " stride " + std::to_string(p.stride) + " padding " +
                          std::to_string(p.padding));
    }
}

/// Column matrix (in_ch * k * k, ho * wo) for batch item n.
template <typename Scalar>
RowMatrixX<Scalar> im2col(const Tensor<Scalar>& input, int n, int k, int stride, int pad, int ho, int wo) {
    const int cin = input.channels();
    const int h = input.height();
    const int w = input.width();
    RowMatrixX<Scalar> col(cin * k * k, ho * wo);
    for (int c = 0; c < cin; ++c) {
        const Scalar* src = input.plane_ptr(n, c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                Scalar* row = col.row((c * k + ky) * k + kx).data();
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? src[iy * w + ix] : Scalar(0);
                    }
                }
            }
        }
    }
    return col;
}

template <typename Scalar>
void col2im_add(const RowMatrixX<Scalar>& col, Tensor<Scalar>& grad_input, int n, int k, int stride, int pad,
                int ho, int wo) {
    const int cin = grad_input.channels();
    const int h = grad_input.height();
    const int w = grad_input.width();
    for (int c = 0; c < cin; ++c) {
        Scalar* dst = grad_input.plane_ptr(n, c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Scalar* row = col.row((c * k + ky) * k + kx).data();
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[iy * w + ix] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

template <typename Scalar>
auto weight_matrix(const ConvParams<Scalar>& p) {
    const int k = p.kernel();
    return Eigen::Map<const RowMatrixX<Scalar>>(p.weight.ptr(), p.out_channels(), p.in_channels() * k * k);
}

/// out[n] = W * col + bias, shared by conv2d and deform_aggregate.
template <typename Scalar>
void gemm_columns(const ConvParams<Scalar>& p, const RowMatrixX<Scalar>& col, Tensor<Scalar>& out, int n) {
    const int plane = out.height() * out.width();
    Eigen::Map<RowMatrixX<Scalar>> dst(out.plane_ptr(n, 0), p.out_channels(), plane);
    dst.noalias() = weight_matrix(p) * col;
    dst.colwise() += p.bias;
}

/// Accumulates weight/bias gradients for one batch item and returns d(col).
template <typename Scalar>
RowMatrixX<Scalar> gemm_columns_backward(const ConvParams<Scalar>& p, const RowMatrixX<Scalar>& col,
                                         const Tensor<Scalar>& grad_out, int n, ConvGrads<Scalar>& g) {
    const int plane = grad_out.height() * grad_out.width();
    Eigen::Map<const RowMatrixX<Scalar>> dout(grad_out.plane_ptr(n, 0), p.out_channels(), plane);
    const int k = p.kernel();
    Eigen::Map<RowMatrixX<Scalar>> dw(g.weight.ptr(), p.out_channels(), p.in_channels() * k * k);
    dw.noalias() += dout * col.transpose();
    g.bias += dout.rowwise().sum();
    return weight_matrix(p).transpose() * dout;
}

} // namespace detail

/// Cross-correlation with zero padding.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const ConvParams<Scalar>& p) {
    detail::check_conv(input, p);
    const int k = p.kernel();
    const int ho = conv_output_size(input.height(), k, p.stride, p.padding);
    const int wo = conv_output_size(input.width(), k, p.stride, p.padding);
    Tensor<Scalar> out(input.batch(), p.out_channels(), ho, wo);
    for (int n = 0; n < input.batch(); ++n) {
        const auto col = detail::im2col(input, n, k, p.stride, p.padding, ho, wo);
        detail::gemm_columns(p, col, out, n);
    }
    return out;
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const ConvParams<Scalar>& p,
                                  const Tensor<Scalar>& grad_out) {
    detail::check_conv(input, p);
    const int k = p.kernel();
    const int ho = conv_output_size(input.height(), k, p.stride, p.padding);
    const int wo = conv_output_size(input.width(), k, p.stride, p.padding);
    if (grad_out.shape() != Shape{input.batch(), p.out_channels(), ho, wo}) {
        throw DimensionError("conv2d_backward: upstream gradient shape " + grad_out.shape().str());
    }
    ConvGrads<Scalar> g{Tensor<Scalar>(input.shape()), Tensor<Scalar>(p.weight.shape()),
                        VectorX<Scalar>::Zero(p.out_channels())};
    for (int n = 0; n < input.batch(); ++n) {
        const auto col = detail::im2col(input, n, k, p.stride, p.padding, ho, wo);
        const auto dcol = detail::gemm_columns_backward(p, col, grad_out, n, g);
        detail::col2im_add(dcol, g.input, n, k, p.stride, p.padding, ho, wo);
    }
    return g;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input) {
    return Tensor<Scalar>::from_data(input.shape(), input.data().cwiseMax(Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out) {
    require_same_shape(input, grad_out, "relu_backward");
    VectorX<Scalar> g = (input.data().array() > Scalar(0)).select(grad_out.data(), Scalar(0));
    return Tensor<Scalar>::from_data(input.shape(), std::move(g));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    // Split by sign so exp never overflows.
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& input) {
    VectorX<Scalar> out = input.data().unaryExpr([](Scalar v) { return sigmoid(v); });
    return Tensor<Scalar>::from_data(input.shape(), std::move(out));
}

/// Takes the sigmoid OUTPUT, not its input.
template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out) {
    require_same_shape(output, grad_out, "sigmoid_backward");
    VectorX<Scalar> g =
        (grad_out.data().array() * output.data().array() * (Scalar(1) - output.data().array())).matrix();
    return Tensor<Scalar>::from_data(output.shape(), std::move(g));
}

/// Lower bound of a heatmap probability; heatmaps live in [eps, 1 - eps].
inline constexpr double kHeatmapEps = 1e-4;

/// Sigmoid clamped to [kHeatmapEps, 1 - kHeatmapEps], keeping focal-loss logs finite.
template <typename Scalar>
Tensor<Scalar> heatmap_sigmoid(const Tensor<Scalar>& input) {
    const auto lo = static_cast<Scalar>(kHeatmapEps);
    const auto hi = static_cast<Scalar>(1.0 - kHeatmapEps);
    VectorX<Scalar> out = input.data().unaryExpr([&](Scalar v) { return std::clamp(sigmoid(v), lo, hi); });
    return Tensor<Scalar>::from_data(input.shape(), std::move(out));
}

/// Backward of heatmap_sigmoid from its output; zero where the clamp is active.
template <typename Scalar>
Tensor<Scalar> heatmap_sigmoid_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out) {
    require_same_shape(output, grad_out, "heatmap_sigmoid_backward");
    const auto lo = static_cast<Scalar>(kHeatmapEps);
    const auto hi = static_cast<Scalar>(1.0 - kHeatmapEps);
    Tensor<Scalar> g = sigmoid_backward(output, grad_out);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (output[i] <= lo || output[i] >= hi) g[i] = Scalar(0);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Bilinear sampling

/// Four-neighbour stencil around a continuous coordinate. The left cell is
/// used at integer coordinates, so a sample exactly on the grid reproduces the
/// stored value and its coordinate derivative is the left-cell slope.
template <typename Scalar>
struct BilinearStencil {
    int x0, y0;     // top-left neighbour; (x0 + 1, y0 + 1) is bottom-right
    Scalar lx, ly;  // fractional weights toward the +1 neighbours
    Scalar hx, hy;  // 1 - lx, 1 - ly

    BilinearStencil(Scalar x, Scalar y) {
        x0 = static_cast<int>(std::ceil(x)) - 1;
        y0 = static_cast<int>(std::ceil(y)) - 1;
        lx = x - Scalar(x0);
        ly = y - Scalar(y0);
        hx = Scalar(1) - lx;
        hy = Scalar(1) - ly;
    }
};

namespace detail {

template <typename Scalar>
Scalar pixel_or_zero(const Scalar* plane, int h, int w, int y, int x) {
    return (y >= 0 && y < h && x >= 0 && x < w) ? plane[y * w + x] : Scalar(0);
}

inline bool sample_in_support(double x, double y, int h, int w) {
    return x > -1.0 && x < static_cast<double>(w) && y > -1.0 && y < static_cast<double>(h);
}

template <typename Scalar>
Scalar sample_plane(const Scalar* plane, int h, int w, Scalar x, Scalar y) {
    if (!sample_in_support(static_cast<double>(x), static_cast<double>(y), h, w)) return Scalar(0);
    const BilinearStencil<Scalar> s(x, y);
    const Scalar v00 = pixel_or_zero(plane, h, w, s.y0, s.x0);
    const Scalar v01 = pixel_or_zero(plane, h, w, s.y0, s.x0 + 1);
    const Scalar v10 = pixel_or_zero(plane, h, w, s.y0 + 1, s.x0);
    const Scalar v11 = pixel_or_zero(plane, h, w, s.y0 + 1, s.x0 + 1);
    return s.hy * s.hx * v00 + s.hy * s.lx * v01 + s.ly * s.hx * v10 + s.ly * s.lx * v11;
}

/// Scatters `g` into the four neighbours and returns (d/dx, d/dy) of the sample.
template <typename Scalar>
std::pair<Scalar, Scalar> sample_plane_backward(const Scalar* plane, Scalar* grad_plane, int h, int w, Scalar x,
                                                Scalar y, Scalar g) {
    if (!sample_in_support(static_cast<double>(x), static_cast<double>(y), h, w)) return {Scalar(0), Scalar(0)};
    const BilinearStencil<Scalar> s(x, y);
    const Scalar v00 = pixel_or_zero(plane, h, w, s.y0, s.x0);
    const Scalar v01 = pixel_or_zero(plane, h, w, s.y0, s.x0 + 1);
    const Scalar v10 = pixel_or_zero(plane, h, w, s.y0 + 1, s.x0);
    const Scalar v11 = pixel_or_zero(plane, h, w, s.y0 + 1, s.x0 + 1);
    if (grad_plane != nullptr) {
        auto add = [&](int yy, int xx, Scalar v) {
            if (yy >= 0 && yy < h && xx >= 0 && xx < w) grad_plane[yy * w + xx] += v;
        };
        add(s.y0, s.x0, g * s.hy * s.hx);
        add(s.y0, s.x0 + 1, g * s.hy * s.lx);
        add(s.y0 + 1, s.x0, g * s.ly * s.hx);
        add(s.y0 + 1, s.x0 + 1, g * s.ly * s.lx);
    }
    const Scalar dx = s.hy * (v01 - v00) + s.ly * (v11 - v10);
    const Scalar dy = s.hx * (v10 - v00) + s.lx * (v11 - v01);
    return {dx, dy};
}

} // namespace detail

/// Bilinear interpolation at continuous pixel coordinates (x, y) of plane
/// (batch, channel); neighbours outside the map read as zero.
template <typename Scalar>
Scalar bilinear_sample(const Tensor<Scalar>& featmap, Scalar x, Scalar y, int channel, int batch = 0) {
    return detail::sample_plane(featmap.plane_ptr(batch, channel), featmap.height(), featmap.width(), x, y);
}

template <typename Scalar>
struct BilinearGrad {
    Scalar dx = 0;
    Scalar dy = 0;
};

/// Adds upstream * d(sample)/d(featmap) into grad_featmap (if non-null) and
/// returns the coordinate derivatives scaled by upstream.
template <typename Scalar>
BilinearGrad<Scalar> bilinear_sample_backward(const Tensor<Scalar>& featmap, Scalar x, Scalar y, int channel,
                                              Scalar upstream, Tensor<Scalar>* grad_featmap, int batch = 0) {
    Scalar* gp = grad_featmap != nullptr ? grad_featmap->plane_ptr(batch, channel) : nullptr;
    auto [dx, dy] = detail::sample_plane_backward(featmap.plane_ptr(batch, channel), gp, featmap.height(),
                                                  featmap.width(), x, y, upstream);
    return {dx * upstream, dy * upstream};
}

// ---------------------------------------------------------------------------
// Deformable aggregation

template <typename Scalar>
struct DeformGrads {
    Tensor<Scalar> featmap;
    Tensor<Scalar> offsets;
    Tensor<Scalar> weights;
    Tensor<Scalar> kernel_weight;
    VectorX<Scalar> kernel_bias;
};

namespace detail {

template <typename Scalar>
void check_deform(const Tensor<Scalar>& featmap, const Tensor<Scalar>& offsets, const Tensor<Scalar>& weights,
                  const ConvParams<Scalar>& p, int& ho, int& wo) {
    check_conv(featmap, p);
    const int taps = p.kernel() * p.kernel();
    if (weights.channels() != taps || offsets.channels() != 2 * taps) {
        throw ConfigError("deform_aggregate: " + std::to_string(weights.channels()) + " ActPoint weights and " +
                          std::to_string(offsets.channels()) + " offset channels for a " +
                          std::to_string(p.kernel()) + "x" + std::to_string(p.kernel()) + " kernel");
    }
    ho = conv_output_size(featmap.height(), p.kernel(), p.stride, p.padding);
    wo = conv_output_size(featmap.width(), p.kernel(), p.stride, p.padding);
    const Shape want_w{featmap.batch(), taps, ho, wo};
    const Shape want_o{featmap.batch(), 2 * taps, ho, wo};
    if (weights.shape() != want_w || offsets.shape() != want_o) {
        throw DimensionError("deform_aggregate: offsets " + offsets.shape().str() + " / weights " +
                             weights.shape().str() + " do not match output grid " + want_w.str());
    }
}

/// Weighted deformable column matrix; also returns raw samples when requested.
template <typename Scalar>
RowMatrixX<Scalar> deform_columns(const Tensor<Scalar>& featmap, const Tensor<Scalar>& offsets,
                                  const Tensor<Scalar>& weights, const ConvParams<Scalar>& p, int n, int ho, int wo,
                                  RowMatrixX<Scalar>* raw) {
    const int k = p.kernel();
    const int taps = k * k;
    const int cin = featmap.channels();
    const int h = featmap.height();
    const int w = featmap.width();
    const int plane = ho * wo;
    RowMatrixX<Scalar> col(cin * taps, plane);
    if (raw != nullptr) raw->resize(cin * taps, plane);
    for (int tap = 0; tap < taps; ++tap) {
        const int ky = tap / k;
        const int kx = tap % k;
        const Scalar* offx = offsets.plane_ptr(n, 2 * tap);
        const Scalar* offy = offsets.plane_ptr(n, 2 * tap + 1);
        const Scalar* wt = weights.plane_ptr(n, tap);
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                const int q = oy * wo + ox;
                const Scalar sx = Scalar(ox * p.stride - p.padding + kx) + offx[q];
                const Scalar sy = Scalar(oy * p.stride - p.padding + ky) + offy[q];
                for (int c = 0; c < cin; ++c) {
                    const Scalar v = sample_plane(featmap.plane_ptr(n, c), h, w, sx, sy);
                    col(c * taps + tap, q) = wt[q] * v;
                    if (raw != nullptr) (*raw)(c * taps + tap, q) = v;
                }
            }
        }
    }
    return col;
}

} // namespace detail

/// Deformable convolution with per-tap modulation. Tap t = ky * k + kx samples
/// at (grid + offset), where offsets channel 2t holds dx and 2t + 1 holds dy,
/// and the sample is scaled by weights channel t before the kernel contraction.
template <typename Scalar>
Tensor<Scalar> deform_aggregate(const Tensor<Scalar>& featmap, const Tensor<Scalar>& offsets,
                                const Tensor<Scalar>& weights, const ConvParams<Scalar>& p) {
    int ho = 0, wo = 0;
    detail::check_deform(featmap, offsets, weights, p, ho, wo);
    Tensor<Scalar> out(featmap.batch(), p.out_channels(), ho, wo);
    for (int n = 0; n < featmap.batch(); ++n) {
        const auto col = detail::deform_columns<Scalar>(featmap, offsets, weights, p, n, ho, wo, nullptr);
        detail::gemm_columns(p, col, out, n);
    }
    return out;
}

template <typename Scalar>
DeformGrads<Scalar> deform_aggregate_backward(const Tensor<Scalar>& featmap, const Tensor<Scalar>& offsets,
                                              const Tensor<Scalar>& weights, const ConvParams<Scalar>& p,
                                              const Tensor<Scalar>& grad_out) {
    int ho = 0, wo = 0;
    detail::check_deform(featmap, offsets, weights, p, ho, wo);
    if (grad_out.shape() != Shape{featmap.batch(), p.out_channels(), ho, wo}) {
        throw DimensionError("deform_aggregate_backward: upstream gradient shape " + grad_out.shape().str());
    }
    ConvGrads<Scalar> cg{Tensor<Scalar>(), Tensor<Scalar>(p.weight.shape()), VectorX<Scalar>::Zero(p.out_channels())};
    DeformGrads<Scalar> g{Tensor<Scalar>(featmap.shape()), Tensor<Scalar>(offsets.shape()),
                          Tensor<Scalar>(weights.shape()), Tensor<Scalar>(), VectorX<Scalar>()};
    const int k = p.kernel();
    const int taps = k * k;
    const int cin = featmap.channels();
    const int h = featmap.height();
    const int w = featmap.width();
    for (int n = 0; n < featmap.batch(); ++n) {
        RowMatrixX<Scalar> raw;
        const auto col = detail::deform_columns(featmap, offsets, weights, p, n, ho, wo, &raw);
        const auto dcol = detail::gemm_columns_backward(p, col, grad_out, n, cg);
        for (int tap = 0; tap < taps; ++tap) {
            const int ky = tap / k;
            const int kx = tap % k;
            const Scalar* offx = offsets.plane_ptr(n, 2 * tap);
            const Scalar* offy = offsets.plane_ptr(n, 2 * tap + 1);
            const Scalar* wt = weights.plane_ptr(n, tap);
            Scalar* goffx = g.offsets.plane_ptr(n, 2 * tap);
            Scalar* goffy = g.offsets.plane_ptr(n, 2 * tap + 1);
            Scalar* gwt = g.weights.plane_ptr(n, tap);
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    const int q = oy * wo + ox;
                    const Scalar sx = Scalar(ox * p.stride - p.padding + kx) + offx[q];
                    const Scalar sy = Scalar(oy * p.stride - p.padding + ky) + offy[q];
                    Scalar acc_w = 0, acc_x = 0, acc_y = 0;
                    for (int c = 0; c < cin; ++c) {
                        const Scalar d = dcol(c * taps + tap, q);
                        acc_w += d * raw(c * taps + tap, q);
                        auto [dx, dy] = detail::sample_plane_backward(featmap.plane_ptr(n, c),
                                                                      g.featmap.plane_ptr(n, c), h, w, sx, sy,
                                                                      d * wt[q]);
                        acc_x += dx * d * wt[q];
                        acc_y += dy * d * wt[q];
                    }
                    gwt[q] += acc_w;
                    goffx[q] += acc_x;
                    goffy[q] += acc_y;
                }
            }
        }
    }
    g.kernel_weight = std::move(cg.weight);
    g.kernel_bias = std::move(cg.bias);
    return g;
}

// ---------------------------------------------------------------------------
// Peak extraction

/// 3x3 max-pool (padding 1) suppression: keeps values equal to their window
/// maximum, zeroes the rest. Ties are all kept. Expects nonnegative maps.
template <typename Scalar>
Tensor<Scalar> maxpool_nms(const Tensor<Scalar>& heatmap) {
    Tensor<Scalar> out(heatmap.shape());
    const int h = heatmap.height();
    const int w = heatmap.width();
    for (int n = 0; n < heatmap.batch(); ++n) {
        for (int c = 0; c < heatmap.channels(); ++c) {
            const Scalar* src = heatmap.plane_ptr(n, c);
            Scalar* dst = out.plane_ptr(n, c);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    Scalar m = -std::numeric_limits<Scalar>::infinity();
                    for (int yy = std::max(0, y - 1); yy <= std::min(h - 1, y + 1); ++yy) {
                        for (int xx = std::max(0, x - 1); xx <= std::min(w - 1, x + 1); ++xx) {
                            m = std::max(m, src[yy * w + xx]);
                        }
                    }
                    const Scalar v = src[y * w + x];
                    dst[y * w + x] = (v == m) ? v : Scalar(0);
                }
            }
        }
    }
    return out;
}

template <typename Scalar>
struct Peak {
    Scalar score;
    int channel;
    int y;
    int x;

    friend bool operator==(const Peak&, const Peak&) = default;
};

/// The k largest entries of batch item `batch` across all channels, in
/// descending score order with ties broken by ascending linear index.
template <typename Scalar>
std::vector<Peak<Scalar>> topk(const Tensor<Scalar>& heatmap, int k, int batch = 0) {
    if (k < 1) throw ConfigError("topk: k must be >= 1");
    const int plane = heatmap.shape().plane();
    const int total = heatmap.channels() * plane;
    const Scalar* base = heatmap.plane_ptr(batch, 0);
    std::vector<int> idx(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) idx[static_cast<std::size_t>(i)] = i;
    const auto take = static_cast<std::ptrdiff_t>(std::min(k, total));
    std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [base](int a, int b) {
        if (base[a] != base[b]) return base[a] > base[b];
        return a < b;
    });
    std::vector<Peak<Scalar>> out;
    out.reserve(static_cast<std::size_t>(take));
    for (std::ptrdiff_t i = 0; i < take; ++i) {
        const int li = idx[static_cast<std::size_t>(i)];
        const int c = li / plane;
        const int r = li % plane;
        out.push_back({base[li], c, r / heatmap.width(), r % heatmap.width()});
    }
    return out;
}

} // namespace ggnet
