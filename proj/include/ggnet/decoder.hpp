#pragma once

// Inference post-processing: peak candidates, action-aware point matching,
// box decoding and triplet assembly.

#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>
#include <vector>

#include "ggnet/hoi.hpp"
#include "ggnet/kernels.hpp"
#include "ggnet/model.hpp"

namespace ggnet {

struct PointCandidate {
    double score = 0;
    int channel = 0;
    int x = 0, y = 0;

    friend bool operator==(const PointCandidate&, const PointCandidate&) = default;
};

enum class MatchNorm { l1, l2 };

struct DecoderConfig {
    int k = 100;
    MatchNorm norm = MatchNorm::l1;
    bool meaningful_only = true;
};

/// 3x3 peak suppression then the k strongest peaks over all channels of one
/// batch item. Channels are relative to `first_channel`.
template <typename Scalar>
std::vector<PointCandidate> select_candidates(const Tensor<Scalar>& heatmap, int k = 100, int batch = 0,
                                              int first_channel = 0, int channel_count = -1) {
    const int count = channel_count < 0 ? heatmap.channels() - first_channel : channel_count;
    const auto plane = slice_channels(batch_item(heatmap, batch), first_channel, count);
    std::vector<PointCandidate> out;
    for (const auto& p : topk(maxpool_nms(plane), k)) {
        if (p.score <= Scalar(0)) break;
        out.push_back({static_cast<double>(p.score), p.channel, p.x, p.y});
    }
    return out;
}

/// Cost of pairing the target location with a candidate: distance / score.
inline double match_cost(double tx, double ty, const PointCandidate& c, MatchNorm norm) {
    const double dx = tx - c.x, dy = ty - c.y;
    const double dist = norm == MatchNorm::l1 ? std::abs(dx) + std::abs(dy) : std::sqrt(dx * dx + dy * dy);
    return dist / c.score;
}

/// Candidate closest to (ip - offset) in score-normalised distance. Ties go to
/// the higher score, then the lower (channel, y, x). Empty input yields none.
inline std::optional<PointCandidate> match_point(int ip_x, int ip_y, double off_x, double off_y,
                                                 const std::vector<PointCandidate>& candidates,
                                                 MatchNorm norm = MatchNorm::l1) {
    if (candidates.empty()) return std::nullopt;
    const double tx = ip_x - off_x, ty = ip_y - off_y;
    const PointCandidate* best = nullptr;
    double best_cost = 0;
    for (const auto& c : candidates) {
        const double cost = match_cost(tx, ty, c, norm);
        bool better = best == nullptr || cost < best_cost;
        if (!better && cost == best_cost) {
            if (c.score != best->score) {
                better = c.score > best->score;
            } else {
                better = std::tie(c.channel, c.y, c.x) < std::tie(best->channel, best->y, best->x);
            }
        }
        if (better) {
            best = &c;
            best_cost = cost;
        }
    }
    return *best;
}

/// Box in input pixels from a centre cell: ((x + reg_x) -/+ w/2, (y + reg_y) -/+ h/2) * stride,
/// clamped to the image. Nonpositive size, before or after clamping, yields none.
template <typename Scalar>
std::optional<Box> decode_box(const PointCandidate& center, const Tensor<Scalar>& det_wh, const Tensor<Scalar>& det_reg,
                              int stride, int image_w, int image_h, int batch = 0) {
    const double w = det_wh(batch, 0, center.y, center.x);
    const double h = det_wh(batch, 1, center.y, center.x);
    if (!(w > 0 && h > 0)) return std::nullopt;
    const double cx = center.x + static_cast<double>(det_reg(batch, 0, center.y, center.x));
    const double cy = center.y + static_cast<double>(det_reg(batch, 1, center.y, center.x));
    Box b{(cx - w / 2) * stride, (cy - h / 2) * stride, (cx + w / 2) * stride, (cy + h / 2) * stride};
    b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(image_w));
    b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(image_w));
    b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(image_h));
    b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(image_h));
    if (!b.valid()) return std::nullopt;
    return b;
}

/// Triplets for one image from inference outputs, sorted by descending score.
template <typename Scalar>
std::vector<HoiTriplet> assemble_triplets(const ForwardOutputs<Scalar>& fw, const ModelConfig& cfg,
                                          const HoiCategoryTable& table, const DecoderConfig& dc = {},
                                          int batch = 0) {
    const auto interactions = select_candidates(fw.interaction_heatmap(), dc.k, batch);
    const auto humans = select_candidates(fw.det_center, dc.k, batch, 0, 1);
    const auto objects = select_candidates(fw.det_center, dc.k, batch, 1, cfg.objects);
    std::vector<HoiTriplet> out;
    for (const auto& ip : interactions) {
        const int base = 4 * cfg.apm_group(ip.channel);
        auto off = [&](int j) { return static_cast<double>(fw.apm_offsets(batch, base + j, ip.y, ip.x)); };
        const auto h = match_point(ip.x, ip.y, off(0), off(1), humans, dc.norm);
        const auto o = match_point(ip.x, ip.y, off(2), off(3), objects, dc.norm);
        if (!h || !o) continue;
        if (dc.meaningful_only && !table.is_meaningful(ip.channel, o->channel)) continue;
        const auto hb = decode_box(*h, fw.det_wh, fw.det_reg, cfg.stride, cfg.width, cfg.height, batch);
        const auto ob = decode_box(*o, fw.det_wh, fw.det_reg, cfg.stride, cfg.width, cfg.height, batch);
        if (!hb || !ob) continue;
        out.push_back({*hb, *ob, ip.channel, o->channel, ip.score * h->score * o->score});
    }
    std::stable_sort(out.begin(), out.end(), [](const HoiTriplet& a, const HoiTriplet& b) { return a.score > b.score; });
    return out;
}

} // namespace ggnet
