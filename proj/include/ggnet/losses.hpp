#pragma once

// Supervision construction and loss terms: signed Gaussian interaction masks,
// the hard-negative attentive focal loss, centre-point detection losses,
// APM matching L1 and the combined objective.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "ggnet/errors.hpp"
#include "ggnet/hoi.hpp"
#include "ggnet/model.hpp"
#include "ggnet/tensor.hpp"

namespace ggnet {

struct LossConfig {
    double alpha = 2.0;
    double beta = 7.0;
    double gamma = 4.0;
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double min_overlap = 0.7;
    bool hna = true;  // false: no hard negatives, i.e. plain focal loss
};

/// Log-argument clamp.
inline constexpr double kProbEps = 1e-6;

// ---------------------------------------------------------------------------
// Gaussian targets

/// Largest radius r such that a box of size (w, h) whose corners are moved by
/// up to r still overlaps the original with IoU >= min_overlap; the minimum
/// over the three corner configurations (one corner in / both in / both out).
inline double gaussian_radius(double box_w, double box_h, double min_overlap = 0.7) {
    if (box_w <= 0 || box_h <= 0) return 0.0;
    const double s = box_w + box_h;
    const double p = box_w * box_h;
    const double ov = min_overlap;
    // (w - r)(h - r) / (2wh - (w - r)(h - r)) >= ov
    const double c1 = p * (1 - ov) / (1 + ov);
    const double r1 = (s - std::sqrt(std::max(0.0, s * s - 4 * c1))) / 2;
    // (w - 2r)(h - 2r) / wh >= ov
    const double r2 = (2 * s - std::sqrt(std::max(0.0, 4 * s * s - 16 * (1 - ov) * p))) / 8;
    // wh / ((w + 2r)(h + 2r)) >= ov
    const double r3 = (-2 * ov * s + std::sqrt(std::max(0.0, 4 * ov * ov * s * s + 16 * ov * (1 - ov) * p))) / (8 * ov);
    return std::max(0.0, std::min({r1, r2, r3}));
}

/// Integer splat radius used for the window and sigma.
inline int splat_radius(double radius) { return std::max(0, static_cast<int>(std::floor(radius))); }

/// Writes sign * exp(-(dx^2 + dy^2) / (2 sigma^2)), sigma = (2r + 1) / 6, into
/// plane (batch, channel) over the integer radius window. Positives take the
/// elementwise max; negatives take the min but never touch pixels whose value
/// is already positive.
template <typename Scalar>
void splat_gaussian(Tensor<Scalar>& mask, int cx, int cy, double radius, int sign, int channel, int batch = 0) {
    const int r = splat_radius(radius);
    const double sigma = (2.0 * r + 1.0) / 6.0;
    Scalar* plane = mask.plane_ptr(batch, channel);
    const int h = mask.height();
    const int w = mask.width();
    for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y) {
        for (int x = std::max(0, cx - r); x <= std::min(w - 1, cx + r); ++x) {
            const double d2 = static_cast<double>((x - cx) * (x - cx) + (y - cy) * (y - cy));
            const auto g = static_cast<Scalar>(std::exp(-d2 / (2.0 * sigma * sigma)));
            Scalar& v = plane[y * w + x];
            if (sign > 0) {
                v = std::max(v, g);
            } else if (v <= Scalar(0)) {
                v = std::min(v, -g);
            }
        }
    }
}

/// Integer feature-map cell of a continuous point, clamped into the map.
inline std::pair<int, int> feature_cell(double fx, double fy, int h, int w) {
    const int x = std::clamp(static_cast<int>(std::floor(fx)), 0, w - 1);
    const int y = std::clamp(static_cast<int>(std::floor(fy)), 0, h - 1);
    return {x, y};
}

/// Radius of an interaction-point Gaussian: from the union of the two boxes,
/// in feature-map pixels.
inline double interaction_radius(const HoiAnnotation& a, int stride, double min_overlap) {
    const Box u = union_box(a.human, a.object);
    return gaussian_radius(u.width() / stride, u.height() / stride, min_overlap);
}

/// Signed interaction mask for one image, shape (1, V, h, w). Positives splat
/// +1 on their verb; every other meaningful verb of the same object class that
/// is not itself labelled at the same interaction cell gets a -1 Gaussian of
/// the same radius.
template <typename Scalar>
Tensor<Scalar> build_mask(const std::vector<HoiAnnotation>& annos, const HoiCategoryTable& table, int feat_h,
                          int feat_w, int stride, double min_overlap = 0.7, bool hard_negatives = true) {
    Tensor<Scalar> mask(1, table.verbs(), feat_h, feat_w);
    struct Point {
        int x, y;
        double radius;
        int verb, object_class;
    };
    std::vector<Point> points;
    std::set<std::tuple<int, int, int, int>> labelled;  // (x, y, verb, object)
    for (const auto& a : annos) {
        table.validate(a);
        const auto [fx, fy] = a.interaction_point(stride);
        const auto [x, y] = feature_cell(fx, fy, feat_h, feat_w);
        points.push_back({x, y, interaction_radius(a, stride, min_overlap), a.verb, a.object_class});
        labelled.insert({x, y, a.verb, a.object_class});
    }
    for (const auto& pt : points) splat_gaussian(mask, pt.x, pt.y, pt.radius, +1, pt.verb);
    if (!hard_negatives) return mask;
    for (const auto& pt : points) {
        for (int v : table.verbs_for_object(pt.object_class)) {
            if (v == pt.verb || labelled.count({pt.x, pt.y, v, pt.object_class})) continue;
            splat_gaussian(mask, pt.x, pt.y, pt.radius, -1, v);
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Focal losses

template <typename Scalar>
struct LossValue {
    double value = 0.0;
    Tensor<Scalar> grad;  // d(value) / d(prediction)
};

namespace detail {

/// One pixel of the hard-negative attentive loss, before the -1/N factor is
/// applied: returns the (negated) summand and its derivative w.r.t. P.
inline std::pair<double, double> hna_pixel(double prob, double m, double alpha, double beta, double gamma) {
    const double pl = std::clamp(prob, kProbEps, 1.0 - kProbEps);
    if (m == 1.0) {
        const double q = 1.0 - prob;
        const double f = std::pow(q, alpha) * std::log(pl);
        const double dlog = (prob == pl) ? 1.0 / prob : 0.0;
        const double df = -alpha * std::pow(q, alpha - 1) * std::log(pl) + std::pow(q, alpha) * dlog;
        return {f, df};
    }
    const double weight = std::pow(1.0 - m, m < 0.0 ? beta : gamma);
    const double q = 1.0 - pl;
    const double dlog = (prob == pl) ? -1.0 / (1.0 - prob) : 0.0;
    const double f = weight * std::pow(prob, alpha) * std::log(q);
    const double df = weight * (alpha * std::pow(prob, alpha - 1) * std::log(q) + std::pow(prob, alpha) * dlog);
    return {f, df};
}

} // namespace detail

/// Hard-negative attentive focal loss. Pixels with M = 1 use the positive
/// branch, pixels with M < 0 are weighted by (1 - M)^beta, all others by
/// (1 - M)^gamma. Normalised by max(N, 1).
template <typename Scalar>
LossValue<Scalar> hna_loss(const Tensor<Scalar>& prob, const Tensor<Scalar>& mask, double alpha, double beta,
                           double gamma, int num_points) {
    require_same_shape(prob, mask, "hna_loss");
    const double norm = 1.0 / std::max(num_points, 1);
    LossValue<Scalar> out{0.0, Tensor<Scalar>(prob.shape())};
    double acc = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double p = static_cast<double>(prob[i]);
        if (!(p > 0.0 && p < 1.0)) {
            throw NumericError("hna_loss: prediction " + std::to_string(p) + " at index " + std::to_string(i) +
                               " outside (0, 1)");
        }
        const auto [f, df] = detail::hna_pixel(p, static_cast<double>(mask[i]), alpha, beta, gamma);
        acc += f;
        out.grad[i] = static_cast<Scalar>(-df * norm);
    }
    out.value = -acc * norm;
    return out;
}

/// Penalty-reduced focal loss on a nonnegative Gaussian target.
template <typename Scalar>
LossValue<Scalar> centernet_focal(const Tensor<Scalar>& prob, const Tensor<Scalar>& target, double alpha,
                                  double gamma, int num_points) {
    if (target.size() > 0 && target.data().minCoeff() < Scalar(0)) {
        throw DataError("centernet_focal: target heatmap has negative entries");
    }
    return hna_loss(prob, target, alpha, /*beta unused*/ gamma, gamma, num_points);
}

// ---------------------------------------------------------------------------
// Per-image targets

/// Regression target at one feature cell.
struct CellTarget {
    int x = 0, y = 0;
    double v0 = 0, v1 = 0, v2 = 0, v3 = 0;
    int group = 0;  // APM channel group
};

template <typename Scalar>
struct ImageTargets {
    Tensor<Scalar> interaction_mask;  // (1, V, h, w)
    int num_interactions = 0;
    Tensor<Scalar> center;  // (1, 1 + O, h, w)
    int num_humans = 0;
    int num_objects = 0;
    std::vector<CellTarget> boxes;     // v0, v1 = w, h; v2, v3 = sub-cell offset
    std::vector<CellTarget> matching;  // human dx, dy, object dx, dy at interaction cells
};

/// Offsets from an interaction cell to the human and object centre cells;
/// interaction - offset recovers each centre.
struct MatchingOffsets {
    int ix, iy;
    int hx, hy;
    int ox, oy;
};

inline MatchingOffsets matching_cells(const HoiAnnotation& a, int stride, int feat_h, int feat_w) {
    const auto [fx, fy] = a.interaction_point(stride);
    const auto [ix, iy] = feature_cell(fx, fy, feat_h, feat_w);
    const auto [hx, hy] = feature_cell(a.human.cx() / stride, a.human.cy() / stride, feat_h, feat_w);
    const auto [ox, oy] = feature_cell(a.object.cx() / stride, a.object.cy() / stride, feat_h, feat_w);
    return {ix, iy, hx, hy, ox, oy};
}

template <typename Scalar>
ImageTargets<Scalar> build_targets(const std::vector<HoiAnnotation>& annos, const HoiCategoryTable& table,
                                   const ModelConfig& cfg, const LossConfig& lc) {
    const int h = cfg.feat_h();
    const int w = cfg.feat_w();
    const int d = cfg.stride;
    ImageTargets<Scalar> t;
    t.interaction_mask = build_mask<Scalar>(annos, table, h, w, d, lc.min_overlap, lc.hna);
    t.num_interactions = static_cast<int>(annos.size());
    t.center = Tensor<Scalar>(1, 1 + cfg.objects, h, w);

    // Each distinct box is one detection instance.
    std::vector<std::pair<Box, int>> instances;  // (box, channel)
    auto add_instance = [&](const Box& b, int channel) {
        for (const auto& [eb, ec] : instances) {
            if (eb == b && ec == channel) return;
        }
        instances.emplace_back(b, channel);
    };
    for (const auto& a : annos) {
        add_instance(a.human, 0);
        add_instance(a.object, 1 + a.object_class);
    }
    for (const auto& [b, channel] : instances) {
        const double fw = b.width() / d, fh = b.height() / d;
        const double fx = b.cx() / d, fy = b.cy() / d;
        const auto [cx, cy] = feature_cell(fx, fy, h, w);
        splat_gaussian(t.center, cx, cy, gaussian_radius(fw, fh, lc.min_overlap), +1, channel);
        t.boxes.push_back({cx, cy, fw, fh, fx - cx, fy - cy, 0});
        if (channel == 0) {
            ++t.num_humans;
        } else {
            ++t.num_objects;
        }
    }
    for (const auto& a : annos) {
        const auto m = matching_cells(a, d, h, w);
        t.matching.push_back({m.ix, m.iy, static_cast<double>(m.ix - m.hx), static_cast<double>(m.iy - m.hy),
                              static_cast<double>(m.ix - m.ox), static_cast<double>(m.iy - m.oy),
                              cfg.apm_group(a.verb)});
    }
    return t;
}

// ---------------------------------------------------------------------------
// APM matching loss

/// L1 between predicted and ground-truth matching offsets at each annotated
/// interaction cell, on the annotation's verb group; normalised by the
/// annotation count. Returns L_mh + L_mo.
template <typename Scalar>
LossValue<Scalar> matching_loss(const Tensor<Scalar>& apm_offsets, const std::vector<HoiAnnotation>& annos,
                                const ModelConfig& cfg, int batch = 0) {
    LossValue<Scalar> out{0.0, Tensor<Scalar>(apm_offsets.shape())};
    if (annos.empty()) return out;
    const double norm = 1.0 / static_cast<double>(annos.size());
    for (const auto& a : annos) {
        const auto m = matching_cells(a, cfg.stride, cfg.feat_h(), cfg.feat_w());
        const double tgt[4] = {static_cast<double>(m.ix - m.hx), static_cast<double>(m.iy - m.hy),
                               static_cast<double>(m.ix - m.ox), static_cast<double>(m.iy - m.oy)};
        const int base = 4 * cfg.apm_group(a.verb);
        for (int j = 0; j < 4; ++j) {
            const double diff = static_cast<double>(apm_offsets(batch, base + j, m.iy, m.ix)) - tgt[j];
            out.value += std::abs(diff) * norm;
            const double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
            out.grad(batch, base + j, m.iy, m.ix) += static_cast<Scalar>(s * norm);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Detection losses

template <typename Scalar>
struct DetectionLoss {
    double human = 0, object = 0, wh = 0, offset = 0;
    double total = 0;  // human + object + lambda2 * wh + offset
    Tensor<Scalar> grad_center, grad_wh, grad_reg;
};

/// Detection loss for batch item `batch` of the detection outputs.
template <typename Scalar>
DetectionLoss<Scalar> detection_losses(const Tensor<Scalar>& det_center, const Tensor<Scalar>& det_wh,
                                       const Tensor<Scalar>& det_reg, const ImageTargets<Scalar>& t,
                                       const LossConfig& lc, int batch = 0) {
    DetectionLoss<Scalar> out;
    const auto center = batch_item(det_center, batch);
    const auto hp = slice_channels(center, 0, 1);
    const auto ht = slice_channels(t.center, 0, 1);
    const int objects = center.channels() - 1;
    const auto op = slice_channels(center, 1, objects);
    const auto ot = slice_channels(t.center, 1, objects);
    auto lh = centernet_focal(hp, ht, lc.alpha, lc.gamma, t.num_humans);
    auto lo = centernet_focal(op, ot, lc.alpha, lc.gamma, t.num_objects);
    out.human = lh.value;
    out.object = lo.value;
    out.grad_center = Tensor<Scalar>(det_center.shape());
    Tensor<Scalar> gc(center.shape());
    accumulate_channels(gc, lh.grad, 0);
    accumulate_channels(gc, lo.grad, 1);
    out.grad_center.data().segment(static_cast<Eigen::Index>(det_center.index(batch, 0, 0, 0)),
                                   static_cast<Eigen::Index>(gc.size())) = gc.data();

    out.grad_wh = Tensor<Scalar>(det_wh.shape());
    out.grad_reg = Tensor<Scalar>(det_reg.shape());
    if (!t.boxes.empty()) {
        const double norm = 1.0 / static_cast<double>(t.boxes.size());
        for (const auto& b : t.boxes) {
            const double wt[2] = {b.v0, b.v1};
            const double ot2[2] = {b.v2, b.v3};
            for (int j = 0; j < 2; ++j) {
                const double dw = static_cast<double>(det_wh(batch, j, b.y, b.x)) - wt[j];
                const double dr = static_cast<double>(det_reg(batch, j, b.y, b.x)) - ot2[j];
                out.wh += std::abs(dw) * norm;
                out.offset += std::abs(dr) * norm;
                out.grad_wh(batch, j, b.y, b.x) +=
                    static_cast<Scalar>(lc.lambda2 * norm * (dw > 0 ? 1.0 : (dw < 0 ? -1.0 : 0.0)));
                out.grad_reg(batch, j, b.y, b.x) += static_cast<Scalar>(norm * (dr > 0 ? 1.0 : (dr < 0 ? -1.0 : 0.0)));
            }
        }
    }
    out.total = out.human + out.object + lc.lambda2 * out.wh + out.offset;
    return out;
}

// ---------------------------------------------------------------------------
// Objective

struct LossTerms {
    std::optional<double> glance, gaze1, gaze2;
    double matching = 0;
    double detection = 0;
    double total = 0;
};

/// Weight of each interaction head: 1 for the deepest enabled stage, lambda1
/// for the auxiliary ones. With every stage enabled this is
/// L = L_gaze2 + lambda1 (L_glance + L_gaze1 + L_m) + L_d.
struct HeadWeights {
    double glance = 0, gaze1 = 0, gaze2 = 0, matching = 0;
};

inline HeadWeights head_weights(const ModelConfig& cfg, double lambda1) {
    HeadWeights w;
    w.matching = lambda1;
    if (cfg.gaze2) {
        w.gaze2 = 1.0;
        w.gaze1 = lambda1;
        w.glance = lambda1;
    } else if (cfg.gaze1) {
        w.gaze1 = 1.0;
        w.glance = lambda1;
    } else {
        w.glance = 1.0;
    }
    return w;
}

inline double total_loss(const LossTerms& t, const ModelConfig& cfg, double lambda1) {
    const HeadWeights w = head_weights(cfg, lambda1);
    return w.glance * t.glance.value_or(0.0) + w.gaze1 * t.gaze1.value_or(0.0) + w.gaze2 * t.gaze2.value_or(0.0) +
           w.matching * t.matching + t.detection;
}

template <typename Scalar>
struct BatchLoss {
    LossTerms terms;  // batch means
    OutputGrads<Scalar> grads;
};

/// Evaluates the objective averaged over the batch and the gradients with
/// respect to every forward output.
template <typename Scalar>
BatchLoss<Scalar> compute_losses(const ForwardOutputs<Scalar>& fw, const std::vector<ImageTargets<Scalar>>& targets,
                                 const std::vector<std::vector<HoiAnnotation>>& annos, const ModelConfig& cfg,
                                 const LossConfig& lc) {
    const int batch = fw.F.batch();
    if (static_cast<int>(targets.size()) != batch || static_cast<int>(annos.size()) != batch) {
        throw DimensionError("compute_losses: " + std::to_string(targets.size()) + " targets for batch of " +
                             std::to_string(batch));
    }
    const HeadWeights hw = head_weights(cfg, lc.lambda1);
    const double inv_b = 1.0 / batch;
    BatchLoss<Scalar> out;
    auto scaled = [](Tensor<Scalar> t, double s) {
        t.data() *= static_cast<Scalar>(s);
        return t;
    };

    auto heat_head = [&](const std::optional<Tensor<Scalar>>& heat, double weight, std::optional<double>& term,
                         std::optional<Tensor<Scalar>>& grad) {
        if (!heat || weight == 0.0) return;
        grad = Tensor<Scalar>(heat->shape());
        double sum = 0.0;
        for (int b = 0; b < batch; ++b) {
            const auto lv = hna_loss(batch_item(*heat, b), targets[static_cast<std::size_t>(b)].interaction_mask,
                                     lc.alpha, lc.beta, lc.gamma,
                                     targets[static_cast<std::size_t>(b)].num_interactions);
            sum += lv.value;
            const auto g = scaled(lv.grad, weight * inv_b);
            grad->data().segment(static_cast<Eigen::Index>(heat->index(b, 0, 0, 0)),
                                 static_cast<Eigen::Index>(g.size())) = g.data();
        }
        term = sum * inv_b;
    };
    heat_head(fw.glance_heatmap, hw.glance, out.terms.glance, out.grads.glance_heatmap);
    heat_head(fw.gaze1_heatmap, hw.gaze1, out.terms.gaze1, out.grads.gaze1_heatmap);
    heat_head(fw.gaze2_heatmap, hw.gaze2, out.terms.gaze2, out.grads.gaze2_heatmap);

    out.grads.apm_offsets = Tensor<Scalar>(fw.apm_offsets.shape());
    out.grads.det_center = Tensor<Scalar>(fw.det_center.shape());
    out.grads.det_wh = Tensor<Scalar>(fw.det_wh.shape());
    out.grads.det_reg = Tensor<Scalar>(fw.det_reg.shape());
    for (int b = 0; b < batch; ++b) {
        const auto m = matching_loss(fw.apm_offsets, annos[static_cast<std::size_t>(b)], cfg, b);
        out.terms.matching += m.value * inv_b;
        out.grads.apm_offsets->data() += m.grad.data() * static_cast<Scalar>(hw.matching * inv_b);
        const auto dl = detection_losses(fw.det_center, fw.det_wh, fw.det_reg, targets[static_cast<std::size_t>(b)],
                                         lc, b);
        out.terms.detection += dl.total * inv_b;
        out.grads.det_center->data() += dl.grad_center.data() * static_cast<Scalar>(inv_b);
        out.grads.det_wh->data() += dl.grad_wh.data() * static_cast<Scalar>(inv_b);
        out.grads.det_reg->data() += dl.grad_reg.data() * static_cast<Scalar>(inv_b);
    }
    out.terms.total = total_loss(out.terms, cfg, lc.lambda1);
    return out;
}

} // namespace ggnet
