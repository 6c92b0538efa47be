#pragma once

// GGNet forward graph: toy backbone, glance step, two gaze steps with
// ActPoint inference, action-aware point matching head and the centre-point
// detection head. Every stage has a hand-written backward pass.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ggnet/errors.hpp"
#include "ggnet/kernels.hpp"
#include "ggnet/tensor.hpp"

namespace ggnet {

enum class WeightActivation { raw, sigmoid };

struct ModelConfig {
    int verbs = 4;          // V
    int objects = 3;        // O
    int channels = 16;      // C
    int stride = 4;         // d
    int actpoints = 25;     // n
    int height = 64;        // H
    int width = 64;         // W
    bool gaze1 = true;
    bool gaze2 = true;
    bool apm_per_verb = true;  // false: one 4-channel regressor shared by all verbs
    WeightActivation weight_activation = WeightActivation::raw;

    /// sqrt(n); throws unless n is a perfect square.
    [[nodiscard]] int actpoint_kernel() const {
        const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(actpoints))));
        if (actpoints <= 0 || k * k != actpoints) {
            throw ConfigError("ActPoint count " + std::to_string(actpoints) + " is not a perfect square");
        }
        return k;
    }
    [[nodiscard]] int backbone_depth() const {
        int depth = 0;
        for (int s = stride; s > 1; s /= 2) ++depth;
        return depth;
    }
    [[nodiscard]] int feat_h() const { return height / stride; }
    [[nodiscard]] int feat_w() const { return width / stride; }
    [[nodiscard]] int apm_channels() const { return apm_per_verb ? 4 * verbs : 4; }
    [[nodiscard]] int apm_group(int verb) const { return apm_per_verb ? verb : 0; }

    void validate() const {
        if (verbs <= 0 || objects <= 0 || channels <= 0) throw ConfigError("verbs, objects, channels must be positive");
        if (stride <= 0 || (stride & (stride - 1)) != 0) {
            throw ConfigError("output stride must be a power of two, got " + std::to_string(stride));
        }
        if (height <= 0 || width <= 0 || height % stride != 0 || width % stride != 0) {
            throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                              " not divisible by stride " + std::to_string(stride));
        }
        static_cast<void>(actpoint_kernel());
        if (gaze2 && !gaze1) throw ConfigError("gaze2 requires gaze1");
    }
};

/// Learnable parameters. Each gaze step owns its own layers.
template <typename Scalar>
struct ModelParams {
    std::vector<ConvParams<Scalar>> backbone;
    ConvParams<Scalar> glance_conv, glance_cls;
    ConvParams<Scalar> gaze1_offset, gaze1_agg, gaze1_cls;
    ConvParams<Scalar> gaze2_g1agg, gaze2_offset, gaze2_agg, gaze2_cls;
    ConvParams<Scalar> apm_conv, apm_out;
    ConvParams<Scalar> det_center_conv, det_center_out;
    ConvParams<Scalar> det_wh_conv, det_wh_out;
    ConvParams<Scalar> det_reg_conv, det_reg_out;

    ModelParams() = default;

    /// Zero-initialised parameters with the shapes implied by `cfg`.
    explicit ModelParams(const ModelConfig& cfg) {
        cfg.validate();
        const int c = cfg.channels;
        const int k = cfg.actpoint_kernel();
        const int n = cfg.actpoints;
        int in = 3;
        for (int i = 0; i < cfg.backbone_depth(); ++i) {
            backbone.emplace_back(c, in, 3, 2, 1);
            in = c;
        }
        glance_conv = ConvParams<Scalar>(c, c, 3);
        glance_cls = ConvParams<Scalar>(cfg.verbs, c, 1);
        if (cfg.gaze1) {
            gaze1_offset = ConvParams<Scalar>(3 * n, c, k);
            gaze1_agg = ConvParams<Scalar>(c, c, k);
            gaze1_cls = ConvParams<Scalar>(cfg.verbs, c, 1);
        }
        if (cfg.gaze2) {
            gaze2_g1agg = ConvParams<Scalar>(c, c, k);
            gaze2_offset = ConvParams<Scalar>(3 * n, c, k);
            gaze2_agg = ConvParams<Scalar>(c, c, k);
            gaze2_cls = ConvParams<Scalar>(cfg.verbs, c, 1);
        }
        apm_conv = ConvParams<Scalar>(c, c, 3);
        apm_out = ConvParams<Scalar>(cfg.apm_channels(), c, 1);
        det_center_conv = ConvParams<Scalar>(c, c, 3);
        det_center_out = ConvParams<Scalar>(1 + cfg.objects, c, 1);
        det_wh_conv = ConvParams<Scalar>(c, c, 3);
        det_wh_out = ConvParams<Scalar>(2, c, 1);
        det_reg_conv = ConvParams<Scalar>(c, c, 3);
        det_reg_out = ConvParams<Scalar>(2, c, 1);
    }

    /// Visits every present layer with a stable name, in a fixed order.
    template <typename Self, typename Fn>
    static void visit_impl(Self& self, Fn&& fn) {
        for (std::size_t i = 0; i < self.backbone.size(); ++i) fn("backbone." + std::to_string(i), self.backbone[i]);
        auto v = [&](const char* name, auto& p) {
            if (p.weight.size() > 0) fn(std::string(name), p);
        };
        v("glance.conv", self.glance_conv);
        v("glance.cls", self.glance_cls);
        v("gaze1.offset", self.gaze1_offset);
        v("gaze1.agg", self.gaze1_agg);
        v("gaze1.cls", self.gaze1_cls);
        v("gaze2.g1agg", self.gaze2_g1agg);
        v("gaze2.offset", self.gaze2_offset);
        v("gaze2.agg", self.gaze2_agg);
        v("gaze2.cls", self.gaze2_cls);
        v("apm.conv", self.apm_conv);
        v("apm.out", self.apm_out);
        v("det.center.conv", self.det_center_conv);
        v("det.center.out", self.det_center_out);
        v("det.wh.conv", self.det_wh_conv);
        v("det.wh.out", self.det_wh_out);
        v("det.reg.conv", self.det_reg_conv);
        v("det.reg.out", self.det_reg_out);
    }
    template <typename Fn>
    void visit(Fn&& fn) {
        visit_impl(*this, std::forward<Fn>(fn));
    }
    template <typename Fn>
    void visit(Fn&& fn) const {
        visit_impl(*this, std::forward<Fn>(fn));
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t total = 0;
        visit([&](const std::string&, const ConvParams<Scalar>& p) {
            total += p.weight.size() + static_cast<std::size_t>(p.bias.size());
        });
        return total;
    }

    /// Flattens weights then biases of every layer, in visit order.
    [[nodiscard]] VectorX<Scalar> flatten() const {
        VectorX<Scalar> out(static_cast<Eigen::Index>(parameter_count()));
        Eigen::Index at = 0;
        visit([&](const std::string&, const ConvParams<Scalar>& p) {
            out.segment(at, static_cast<Eigen::Index>(p.weight.size())) = p.weight.data();
            at += static_cast<Eigen::Index>(p.weight.size());
            out.segment(at, p.bias.size()) = p.bias;
            at += p.bias.size();
        });
        return out;
    }

    void unflatten(const VectorX<Scalar>& flat) {
        if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
            throw DimensionError("unflatten: " + std::to_string(flat.size()) + " values for " +
                                 std::to_string(parameter_count()) + " parameters");
        }
        Eigen::Index at = 0;
        visit([&](const std::string&, ConvParams<Scalar>& p) {
            p.weight.data() = flat.segment(at, static_cast<Eigen::Index>(p.weight.size()));
            at += static_cast<Eigen::Index>(p.weight.size());
            p.bias = flat.segment(at, p.bias.size());
            at += p.bias.size();
        });
    }

    template <typename Other>
    [[nodiscard]] ModelParams<Other> cast() const {
        ModelParams<Other> out;
        for (const auto& b : backbone) out.backbone.push_back(b.template cast<Other>());
        auto c = [](const ConvParams<Scalar>& p) {
            return p.weight.size() > 0 ? p.template cast<Other>() : ConvParams<Other>();
        };
        out.glance_conv = c(glance_conv);
        out.glance_cls = c(glance_cls);
        out.gaze1_offset = c(gaze1_offset);
        out.gaze1_agg = c(gaze1_agg);
        out.gaze1_cls = c(gaze1_cls);
        out.gaze2_g1agg = c(gaze2_g1agg);
        out.gaze2_offset = c(gaze2_offset);
        out.gaze2_agg = c(gaze2_agg);
        out.gaze2_cls = c(gaze2_cls);
        out.apm_conv = c(apm_conv);
        out.apm_out = c(apm_out);
        out.det_center_conv = c(det_center_conv);
        out.det_center_out = c(det_center_out);
        out.det_wh_conv = c(det_wh_conv);
        out.det_wh_out = c(det_wh_out);
        out.det_reg_conv = c(det_reg_conv);
        out.det_reg_out = c(det_reg_out);
        return out;
    }
};

/// Bias of sigmoid heatmap classifiers at initialisation (prior 0.1).
inline constexpr double kHeatmapPriorBias = -2.19;

/// Kaiming fan-in initialisation. Offset/weight-producing convs start at zero
/// weights with weight-channel bias 1, i.e. at the plain-convolution point.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams<Scalar> p(cfg);
    std::mt19937_64 rng(seed);
    auto kaiming = [&](ConvParams<Scalar>& c, double gain) {
        const double fan_in = static_cast<double>(c.in_channels() * c.kernel() * c.kernel());
        std::normal_distribution<double> nd(0.0, gain * std::sqrt(2.0 / fan_in));
        for (std::size_t i = 0; i < c.weight.size(); ++i) c.weight[i] = static_cast<Scalar>(nd(rng));
        c.bias.setZero();
    };
    const int n = cfg.actpoints;
    auto offset_init = [&](ConvParams<Scalar>& c) {
        c.weight.fill(Scalar(0));
        c.bias.setZero();
        const Scalar unit = cfg.weight_activation == WeightActivation::raw ? Scalar(1) : Scalar(0);
        c.bias.segment(2 * n, n).setConstant(unit);
    };
    auto cls_init = [&](ConvParams<Scalar>& c) {
        kaiming(c, 0.5);
        c.bias.setConstant(static_cast<Scalar>(kHeatmapPriorBias));
    };
    for (auto& b : p.backbone) kaiming(b, 1.0);
    kaiming(p.glance_conv, 1.0);
    cls_init(p.glance_cls);
    if (cfg.gaze1) {
        offset_init(p.gaze1_offset);
        kaiming(p.gaze1_agg, 0.5);
        cls_init(p.gaze1_cls);
    }
    if (cfg.gaze2) {
        kaiming(p.gaze2_g1agg, 0.5);
        offset_init(p.gaze2_offset);
        kaiming(p.gaze2_agg, 0.5);
        cls_init(p.gaze2_cls);
    }
    kaiming(p.apm_conv, 1.0);
    kaiming(p.apm_out, 0.1);
    kaiming(p.det_center_conv, 1.0);
    cls_init(p.det_center_out);
    kaiming(p.det_wh_conv, 1.0);
    kaiming(p.det_wh_out, 0.1);
    kaiming(p.det_reg_conv, 1.0);
    kaiming(p.det_reg_out, 0.1);
    return p;
}

/// Per-pixel ActPoint offsets (channel 2k = dx, 2k + 1 = dy, feature-map
/// pixels relative to the regular grid) and weights for one gaze step.
template <typename Scalar>
struct ActPointField {
    Tensor<Scalar> offsets;      // (batch, 2n, h, w)
    Tensor<Scalar> weights;      // (batch, n, h, w), after the configured activation
    Tensor<Scalar> raw_weights;  // pre-activation weights
};

template <typename Scalar>
struct ForwardOutputs {
    // Backbone activations; backbone_acts[0] is the input image.
    std::vector<Tensor<Scalar>> backbone_acts;
    Tensor<Scalar> F, F0, F1, F2, G1;
    std::optional<Tensor<Scalar>> glance_heatmap;
    std::optional<Tensor<Scalar>> gaze1_heatmap;
    std::optional<Tensor<Scalar>> gaze2_heatmap;
    Tensor<Scalar> apm_hidden, apm_offsets;
    Tensor<Scalar> det_center_hidden, det_center;
    Tensor<Scalar> det_wh_hidden, det_wh;
    Tensor<Scalar> det_reg_hidden, det_reg;
    ActPointField<Scalar> actpoints_step1;
    Tensor<Scalar> residual_offsets;
    ActPointField<Scalar> actpoints_final;
    int conv_calls = 0;    // dense convolutions executed
    int deform_calls = 0;  // deformable aggregations executed

    /// Heatmap of the deepest enabled interaction stage.
    [[nodiscard]] const Tensor<Scalar>& interaction_heatmap() const {
        if (gaze2_heatmap) return *gaze2_heatmap;
        if (gaze1_heatmap) return *gaze1_heatmap;
        if (glance_heatmap) return *glance_heatmap;
        throw ConfigError("forward outputs carry no interaction heatmap");
    }
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> activate_weights(const Tensor<Scalar>& raw, WeightActivation act) {
    return act == WeightActivation::raw ? raw : sigmoid(raw);
}

template <typename Scalar>
ActPointField<Scalar> split_actpoints(const Tensor<Scalar>& conv_out, int n, WeightActivation act) {
    ActPointField<Scalar> f;
    f.offsets = slice_channels(conv_out, 0, 2 * n);
    f.raw_weights = slice_channels(conv_out, 2 * n, n);
    f.weights = activate_weights(f.raw_weights, act);
    return f;
}

} // namespace detail

enum class ForwardMode { train, infer };

/// Runs the graph. In infer mode the glance and gaze-1 classifiers that only
/// supervise ActPoint inference are skipped; the deepest enabled classifier
/// always runs.
template <typename Scalar>
ForwardOutputs<Scalar> forward(const Tensor<Scalar>& image, const ModelParams<Scalar>& p, const ModelConfig& cfg,
                               ForwardMode mode) {
    cfg.validate();
    if (image.channels() != 3 || image.height() != cfg.height || image.width() != cfg.width) {
        throw ConfigError("image " + image.shape().str() + " does not match config " + std::to_string(cfg.height) +
                          "x" + std::to_string(cfg.width) + "x3");
    }
    ForwardOutputs<Scalar> out;
    auto conv = [&](const Tensor<Scalar>& x, const ConvParams<Scalar>& c) {
        ++out.conv_calls;
        return conv2d(x, c);
    };
    auto deform = [&](const Tensor<Scalar>& x, const Tensor<Scalar>& off, const Tensor<Scalar>& w,
                      const ConvParams<Scalar>& c) {
        ++out.deform_calls;
        return deform_aggregate(x, off, w, c);
    };
    const bool infer = mode == ForwardMode::infer;
    const int n = cfg.actpoints;

    out.backbone_acts.push_back(image);
    for (const auto& layer : p.backbone) out.backbone_acts.push_back(relu(conv(out.backbone_acts.back(), layer)));
    out.F = out.backbone_acts.back();

    // Glance
    out.F0 = relu(conv(out.F, p.glance_conv));
    if (!(infer && cfg.gaze1)) out.glance_heatmap = heatmap_sigmoid(conv(out.F0, p.glance_cls));

    // Gaze step 1: coarse ActPoints from F0, aggregated over F0.
    if (cfg.gaze1) {
        out.actpoints_step1 = detail::split_actpoints(conv(out.F0, p.gaze1_offset), n, cfg.weight_activation);
        out.F1 = deform(out.F0, out.actpoints_step1.offsets, out.actpoints_step1.weights, p.gaze1_agg);
        if (!(infer && cfg.gaze2)) out.gaze1_heatmap = heatmap_sigmoid(conv(out.F1, p.gaze1_cls));
    }

    // Gaze step 2: residual offsets from G1, final ActPoints aggregated over F1.
    if (cfg.gaze2) {
        const auto& a1 = out.actpoints_step1;
        out.G1 = deform(out.F1, a1.offsets, a1.weights, p.gaze2_g1agg);
        const auto step2 = detail::split_actpoints(conv(out.G1, p.gaze2_offset), n, cfg.weight_activation);
        out.residual_offsets = step2.offsets;
        out.actpoints_final.offsets =
            Tensor<Scalar>::from_data(a1.offsets.shape(), a1.offsets.data() + step2.offsets.data());
        out.actpoints_final.weights = step2.weights;
        out.actpoints_final.raw_weights = step2.raw_weights;
        out.F2 = deform(out.F1, out.actpoints_final.offsets, out.actpoints_final.weights, p.gaze2_agg);
        out.gaze2_heatmap = heatmap_sigmoid(conv(out.F2, p.gaze2_cls));
    }

    // Action-aware point matching
    out.apm_hidden = relu(conv(out.F0, p.apm_conv));
    out.apm_offsets = conv(out.apm_hidden, p.apm_out);

    // Detection
    out.det_center_hidden = relu(conv(out.F, p.det_center_conv));
    out.det_center = heatmap_sigmoid(conv(out.det_center_hidden, p.det_center_out));
    out.det_wh_hidden = relu(conv(out.F, p.det_wh_conv));
    out.det_wh = conv(out.det_wh_hidden, p.det_wh_out);
    out.det_reg_hidden = relu(conv(out.F, p.det_reg_conv));
    out.det_reg = conv(out.det_reg_hidden, p.det_reg_out);
    return out;
}

template <typename Scalar>
ForwardOutputs<Scalar> forward_train(const Tensor<Scalar>& image, const ModelParams<Scalar>& p,
                                     const ModelConfig& cfg) {
    return forward(image, p, cfg, ForwardMode::train);
}

template <typename Scalar>
ForwardOutputs<Scalar> forward_infer(const Tensor<Scalar>& image, const ModelParams<Scalar>& p,
                                     const ModelConfig& cfg) {
    return forward(image, p, cfg, ForwardMode::infer);
}

/// Gradients of a scalar objective with respect to the forward outputs.
/// Heatmap gradients are taken w.r.t. post-sigmoid values. Absent entries
/// mean zero.
template <typename Scalar>
struct OutputGrads {
    std::optional<Tensor<Scalar>> glance_heatmap;
    std::optional<Tensor<Scalar>> gaze1_heatmap;
    std::optional<Tensor<Scalar>> gaze2_heatmap;
    std::optional<Tensor<Scalar>> apm_offsets;
    std::optional<Tensor<Scalar>> det_center;
    std::optional<Tensor<Scalar>> det_wh;
    std::optional<Tensor<Scalar>> det_reg;
};

/// Backward through the training graph. Returns parameter gradients with the
/// same layout as `p`; `grad_image`, when non-null, receives d/d(image).
template <typename Scalar>
ModelParams<Scalar> backward(const ForwardOutputs<Scalar>& fw, const ModelParams<Scalar>& p, const ModelConfig& cfg,
                             const OutputGrads<Scalar>& g, Tensor<Scalar>* grad_image = nullptr) {
    ModelParams<Scalar> grads(cfg);
    const int n = cfg.actpoints;

    auto add = [](std::optional<Tensor<Scalar>>& acc, const Tensor<Scalar>& v) {
        if (acc) {
            acc->data() += v.data();
        } else {
            acc = v;
        }
    };
    auto store = [](ConvParams<Scalar>& dst, ConvGrads<Scalar>& src) {
        dst.weight.data() += src.weight.data();
        dst.bias += src.bias;
    };
    // Conv layer backward: accumulates parameter grads, returns d(input).
    auto conv_bw = [&](const Tensor<Scalar>& in, const ConvParams<Scalar>& c, ConvParams<Scalar>& dc,
                       const Tensor<Scalar>& gout) {
        auto cg = conv2d_backward(in, c, gout);
        store(dc, cg);
        return std::move(cg.input);
    };
    // Sigmoid classifier on top of `in`; returns d(in).
    auto cls_bw = [&](const Tensor<Scalar>& in, const Tensor<Scalar>& prob, const ConvParams<Scalar>& c,
                      ConvParams<Scalar>& dc, const Tensor<Scalar>& gprob) {
        return conv_bw(in, c, dc, heatmap_sigmoid_backward(prob, gprob));
    };
    // d(raw 3n-channel conv output) from d(offsets) and d(activated weights).
    auto actpoint_raw_grad = [&](const ActPointField<Scalar>& f, const Tensor<Scalar>& doff,
                                 const Tensor<Scalar>& dw) {
        Tensor<Scalar> d(f.offsets.batch(), 3 * n, f.offsets.height(), f.offsets.width());
        accumulate_channels(d, doff, 0);
        const Tensor<Scalar> draw =
            cfg.weight_activation == WeightActivation::raw ? dw : sigmoid_backward(f.weights, dw);
        accumulate_channels(d, draw, 2 * n);
        return d;
    };

    std::optional<Tensor<Scalar>> dF, dF0, dF1;

    if (cfg.gaze2 && g.gaze2_heatmap) {
        const auto& a1 = fw.actpoints_step1;
        const auto& af = fw.actpoints_final;
        const auto dF2 = cls_bw(fw.F2, *fw.gaze2_heatmap, p.gaze2_cls, grads.gaze2_cls, *g.gaze2_heatmap);
        auto dg = deform_aggregate_backward(fw.F1, af.offsets, af.weights, p.gaze2_agg, dF2);
        grads.gaze2_agg.weight.data() += dg.kernel_weight.data();
        grads.gaze2_agg.bias += dg.kernel_bias;
        add(dF1, dg.featmap);
        // final = coarse + residual: the offset gradient flows to both.
        Tensor<Scalar> doff1 = dg.offsets;
        const auto draw2 = actpoint_raw_grad(af, dg.offsets, dg.weights);
        const auto dG1 = conv_bw(fw.G1, p.gaze2_offset, grads.gaze2_offset, draw2);
        auto dg1 = deform_aggregate_backward(fw.F1, a1.offsets, a1.weights, p.gaze2_g1agg, dG1);
        grads.gaze2_g1agg.weight.data() += dg1.kernel_weight.data();
        grads.gaze2_g1agg.bias += dg1.kernel_bias;
        add(dF1, dg1.featmap);
        doff1.data() += dg1.offsets.data();
        const auto draw1 = actpoint_raw_grad(a1, doff1, dg1.weights);
        add(dF0, conv_bw(fw.F0, p.gaze1_offset, grads.gaze1_offset, draw1));
    }

    if (cfg.gaze1) {
        if (g.gaze1_heatmap && fw.gaze1_heatmap) {
            add(dF1, cls_bw(fw.F1, *fw.gaze1_heatmap, p.gaze1_cls, grads.gaze1_cls, *g.gaze1_heatmap));
        }
        if (dF1) {
            const auto& a1 = fw.actpoints_step1;
            auto dg = deform_aggregate_backward(fw.F0, a1.offsets, a1.weights, p.gaze1_agg, *dF1);
            grads.gaze1_agg.weight.data() += dg.kernel_weight.data();
            grads.gaze1_agg.bias += dg.kernel_bias;
            add(dF0, dg.featmap);
            const auto draw1 = actpoint_raw_grad(a1, dg.offsets, dg.weights);
            add(dF0, conv_bw(fw.F0, p.gaze1_offset, grads.gaze1_offset, draw1));
        }
    }

    if (g.glance_heatmap && fw.glance_heatmap) {
        add(dF0, cls_bw(fw.F0, *fw.glance_heatmap, p.glance_cls, grads.glance_cls, *g.glance_heatmap));
    }

    if (g.apm_offsets) {
        const auto dh = conv_bw(fw.apm_hidden, p.apm_out, grads.apm_out, *g.apm_offsets);
        add(dF0, conv_bw(fw.F0, p.apm_conv, grads.apm_conv, relu_backward(fw.apm_hidden, dh)));
    }

    if (dF0) add(dF, conv_bw(fw.F, p.glance_conv, grads.glance_conv, relu_backward(fw.F0, *dF0)));

    auto det_branch = [&](const Tensor<Scalar>& hidden, const ConvParams<Scalar>& conv_p, ConvParams<Scalar>& dconv,
                          const ConvParams<Scalar>& out_p, ConvParams<Scalar>& dout, const Tensor<Scalar>& dlogit) {
        const auto dh = conv_bw(hidden, out_p, dout, dlogit);
        add(dF, conv_bw(fw.F, conv_p, dconv, relu_backward(hidden, dh)));
    };
    if (g.det_center) {
        det_branch(fw.det_center_hidden, p.det_center_conv, grads.det_center_conv, p.det_center_out,
                   grads.det_center_out, heatmap_sigmoid_backward(fw.det_center, *g.det_center));
    }
    if (g.det_wh) {
        det_branch(fw.det_wh_hidden, p.det_wh_conv, grads.det_wh_conv, p.det_wh_out, grads.det_wh_out, *g.det_wh);
    }
    if (g.det_reg) {
        det_branch(fw.det_reg_hidden, p.det_reg_conv, grads.det_reg_conv, p.det_reg_out, grads.det_reg_out,
                   *g.det_reg);
    }

    if (dF) {
        Tensor<Scalar> d = *dF;
        for (std::size_t i = p.backbone.size(); i-- > 0;) {
            const auto& act = fw.backbone_acts[i + 1];
            d = conv_bw(fw.backbone_acts[i], p.backbone[i], grads.backbone[i], relu_backward(act, d));
        }
        if (grad_image != nullptr) *grad_image = std::move(d);
    } else if (grad_image != nullptr) {
        *grad_image = Tensor<Scalar>(fw.backbone_acts.front().shape());
    }
    return grads;
}

} // namespace ggnet
