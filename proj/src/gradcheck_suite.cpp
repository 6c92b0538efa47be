#include "ggnet/gradcheck_suite.hpp"

#include <algorithm>
#include <random>

#include "ggnet/losses.hpp"
#include "ggnet/model.hpp"

namespace ggnet {

namespace {

using Rng = std::mt19937_64;

Tensor<double> uniform(Shape s, Rng& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<double> t(s);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

// Value at least `margin` from an integer, so that small perturbations stay in one bilinear cell.
double off_grid(Rng& rng, double lo, double hi, double margin = 0.05) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (;;) {
        const double v = u(rng);
        const double frac = v - std::floor(v);
        if (frac > margin && frac < 1 - margin) return v;
    }
}

ConvParams<double> random_conv(int out, int in, int k, Rng& rng, int stride = 1) {
    ConvParams<double> p(out, in, k, stride);
    p.weight = uniform(p.weight.shape(), rng);
    p.bias = uniform({1, out, 1, 1}, rng).data();
    return p;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) { return a.data().dot(b.data()); }

void randomize(ModelParams<double>& p, Rng& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    p.visit([&](const std::string&, ConvParams<double>& c) {
        for (auto& v : c.weight.data()) v = u(rng);
        for (auto& v : c.bias) v = u(rng);
    });
}

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.verbs = 2;
    cfg.objects = 2;
    cfg.channels = 3;
    cfg.actpoints = 9;
    cfg.height = 16;
    cfg.width = 20;
    return cfg;
}

HoiCategoryTable full_table(int verbs, int objects) {
    HoiCategoryTable t(verbs, objects);
    for (int v = 0; v < verbs; ++v)
        for (int o = 0; o < objects; ++o) t.add_meaningful(v, o);
    return t;
}

std::vector<HoiAnnotation> random_annotations(Rng& rng, int count, int verbs, int objects, double w, double h) {
    std::uniform_real_distribution<double> ux(0, w - 6), uy(0, h - 6), size(3, 6);
    std::uniform_int_distribution<int> pv(0, verbs - 1), po(0, objects - 1);
    auto box = [&] {
        const double x = ux(rng), y = uy(rng);
        return Box{x, y, x + size(rng), y + size(rng)};
    };
    std::vector<HoiAnnotation> out;
    for (int i = 0; i < count; ++i) {
        const Box hb = box();
        const Box ob = box();
        out.push_back({hb, ob, pv(rng), po(rng)});
    }
    return out;
}

GradCheckReport check_conv2d(Rng& rng, int seed) {
    const auto in = uniform({2, 2, 5, 4}, rng);
    const auto p = random_conv(3, 2, 3, rng, 1 + seed % 2);
    const auto probe = uniform(conv2d(in, p).shape(), rng);
    const auto g = conv2d_backward(in, p, probe);
    auto r = finite_diff_check([&](const Tensor<double>& x) { return dot(conv2d(x, p), probe); }, in, g.input);
    r = merge_reports(r, finite_diff_check(
                             [&](const Tensor<double>& w) {
                                 auto q = p;
                                 q.weight = w;
                                 return dot(conv2d(in, q), probe);
                             },
                             p.weight, g.weight));
    return merge_reports(r, finite_diff_check(
                                [&](const VectorX<double>& b) {
                                    auto q = p;
                                    q.bias = b;
                                    return dot(conv2d(in, q), probe);
                                },
                                p.bias, g.bias));
}

Tensor<double> away_from_zero(Tensor<double> t) {
    for (auto& v : t.data()) {
        if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
    }
    return t;
}

GradCheckReport check_activation(Rng& rng, const std::string& op) {
    const auto x = away_from_zero(uniform({1, 2, 4, 4}, rng, -3, 3));
    const auto probe = uniform(x.shape(), rng);
    if (op == "relu") {
        return finite_diff_check([&](const Tensor<double>& v) { return dot(relu(v), probe); }, x,
                                 relu_backward(x, probe));
    }
    if (op == "sigmoid") {
        return finite_diff_check([&](const Tensor<double>& v) { return dot(sigmoid(v), probe); }, x,
                                 sigmoid_backward(sigmoid(x), probe));
    }
    return finite_diff_check([&](const Tensor<double>& v) { return dot(heatmap_sigmoid(v), probe); }, x,
                             heatmap_sigmoid_backward(heatmap_sigmoid(x), probe));
}

GradCheckReport check_bilinear(Rng& rng) {
    const auto t = uniform({1, 1, 5, 6}, rng);
    const double x = off_grid(rng, -0.9, 5.9);
    const double y = off_grid(rng, -0.9, 4.9);
    Tensor<double> gmap(t.shape());
    const auto gxy = bilinear_sample_backward(t, x, y, 0, 1.0, &gmap);
    auto r = finite_diff_check([&](const Tensor<double>& m) { return bilinear_sample(m, x, y, 0); }, t, gmap);
    GradCheckOptions opt;
    opt.epsilon = 1e-4;
    const VectorX<double> xy = (VectorX<double>(2) << x, y).finished();
    const VectorX<double> g = (VectorX<double>(2) << gxy.dx, gxy.dy).finished();
    return merge_reports(
        r, finite_diff_check([&](const VectorX<double>& v) { return bilinear_sample(t, v[0], v[1], 0); }, xy, g, opt));
}

GradCheckReport check_deform(Rng& rng) {
    const auto f = uniform({1, 2, 5, 5}, rng);
    const auto p = random_conv(2, 2, 3, rng);
    Tensor<double> off(1, 18, 5, 5);
    for (auto& v : off.data()) v = off_grid(rng, -1.5, 1.5);
    const auto wts = uniform({1, 9, 5, 5}, rng);
    const auto probe = uniform({1, 2, 5, 5}, rng);
    const auto g = deform_aggregate_backward(f, off, wts, p, probe);
    auto r = finite_diff_check([&](const Tensor<double>& v) { return dot(deform_aggregate(v, off, wts, p), probe); },
                               f, g.featmap);
    r = merge_reports(r, finite_diff_check(
                             [&](const Tensor<double>& v) { return dot(deform_aggregate(f, v, wts, p), probe); },
                             off, g.offsets));
    r = merge_reports(r, finite_diff_check(
                             [&](const Tensor<double>& v) { return dot(deform_aggregate(f, off, v, p), probe); },
                             wts, g.weights));
    return merge_reports(r, finite_diff_check(
                                [&](const Tensor<double>& v) {
                                    auto q = p;
                                    q.weight = v;
                                    return dot(deform_aggregate(f, off, wts, q), probe);
                                },
                                p.weight, g.kernel_weight));
}

GradCheckReport check_hna(Rng& rng) {
    const auto table = full_table(3, 2);
    const auto annos = random_annotations(rng, 3, 3, 2, 24, 24);
    auto m = build_mask<double>(annos, table, 6, 6, 4);
    const auto p = uniform(m.shape(), rng, 0.05, 0.95);
    const auto lv = hna_loss(p, m, 2, 7, 4, 3);
    GradCheckOptions opt;
    opt.epsilon = 1e-6;
    return finite_diff_check([&](const Tensor<double>& x) { return hna_loss(x, m, 2, 7, 4, 3).value; }, p, lv.grad,
                             opt);
}

GradCheckReport check_model(Rng& rng) {
    const auto cfg = tiny_model();
    ModelParams<double> p(cfg);
    randomize(p, rng, 0.5);
    const auto image = uniform({2, 3, cfg.height, cfg.width}, rng, 0, 1);
    const auto fw = forward_train(image, p, cfg);
    OutputGrads<double> probe{uniform(fw.glance_heatmap->shape(), rng), uniform(fw.gaze1_heatmap->shape(), rng),
                              uniform(fw.gaze2_heatmap->shape(), rng),  uniform(fw.apm_offsets.shape(), rng),
                              uniform(fw.det_center.shape(), rng),      uniform(fw.det_wh.shape(), rng),
                              uniform(fw.det_reg.shape(), rng)};
    auto value = [&](const ForwardOutputs<double>& o) {
        return dot(*o.glance_heatmap, *probe.glance_heatmap) + dot(*o.gaze1_heatmap, *probe.gaze1_heatmap) +
               dot(*o.gaze2_heatmap, *probe.gaze2_heatmap) + dot(o.apm_offsets, *probe.apm_offsets) +
               dot(o.det_center, *probe.det_center) + dot(o.det_wh, *probe.det_wh) + dot(o.det_reg, *probe.det_reg);
    };
    Tensor<double> dimage;
    const auto g = backward(fw, p, cfg, probe, &dimage);
    GradCheckOptions opt;
    opt.epsilon = 1e-5;
    opt.refinements = 2;
    auto r = finite_diff_check(
        [&](const VectorX<double>& flat) {
            auto q = p;
            q.unflatten(flat);
            return value(forward_train(image, q, cfg));
        },
        p.flatten(), g.flatten(), opt);
    return merge_reports(
        r, finite_diff_check([&](const Tensor<double>& im) { return value(forward_train(im, p, cfg)); }, image, dimage,
                             opt));
}

GradCheckReport check_objective(Rng& rng) {
    auto cfg = tiny_model();
    cfg.height = cfg.width = 32;
    const auto table = full_table(cfg.verbs, cfg.objects);
    const LossConfig lc;
    std::vector<std::vector<HoiAnnotation>> annos;
    std::vector<ImageTargets<double>> targets;
    for (int b = 0; b < 2; ++b) {
        annos.push_back(random_annotations(rng, 1 + b, cfg.verbs, cfg.objects, 32, 32));
        targets.push_back(build_targets<double>(annos.back(), table, cfg, lc));
    }
    const auto image = uniform({2, 3, 32, 32}, rng, 0, 1);
    ModelParams<double> p(cfg);
    randomize(p, rng, 0.4);
    const auto fw = forward_train(image, p, cfg);
    const auto loss = compute_losses(fw, targets, annos, cfg, lc);
    const auto g = backward(fw, p, cfg, loss.grads);
    GradCheckOptions opt;
    opt.epsilon = 1e-6;
    opt.refinements = 2;
    return finite_diff_check(
        [&](const VectorX<double>& flat) {
            auto q = p;
            q.unflatten(flat);
            return compute_losses(forward_train(image, q, cfg), targets, annos, cfg, lc).terms.total;
        },
        p.flatten(), g.flatten(), opt);
}

} // namespace

const std::vector<std::string>& gradcheck_ops() {
    static const std::vector<std::string> ops = {"conv2d",          "relu",     "sigmoid", "heatmap_sigmoid",
                                                 "bilinear_sample", "deform_aggregate", "hna_loss", "model",
                                                 "objective"};
    return ops;
}

GradCheckReport merge_reports(const GradCheckReport& a, const GradCheckReport& b) {
    GradCheckReport r = a.max_rel_error >= b.max_rel_error ? a : b;
    r.max_abs_error = std::max(a.max_abs_error, b.max_abs_error);
    r.checked = a.checked + b.checked;
    r.refined = a.refined + b.refined;
    r.passed = a.passed && b.passed;
    return r;
}

GradCheckReport run_gradcheck(const std::string& op, int seed) {
    const auto& ops = gradcheck_ops();
    const auto idx = static_cast<std::uint64_t>(std::find(ops.begin(), ops.end(), op) - ops.begin());
    Rng rng(static_cast<std::uint64_t>(seed) * 1000003ULL + idx);
    if (op == "conv2d") return check_conv2d(rng, seed);
    if (op == "relu" || op == "sigmoid" || op == "heatmap_sigmoid") return check_activation(rng, op);
    if (op == "bilinear_sample") return check_bilinear(rng);
    if (op == "deform_aggregate") return check_deform(rng);
    if (op == "hna_loss") return check_hna(rng);
    if (op == "model") return check_model(rng);
    if (op == "objective") return check_objective(rng);
    throw ConfigError("unknown gradcheck op '" + op + "'");
}

} // namespace ggnet
