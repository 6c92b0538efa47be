#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. Written directly from the definitions, without the library's
// im2col/stencil/GEMM machinery.

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "ggnet/decoder.hpp"
#include "ggnet/hoi.hpp"
#include "ggnet/kernels.hpp"
#include "ggnet/tensor.hpp"

namespace ggnet::oracle {

// Direct nested-loop cross-correlation in double.
inline Tensor<double> conv_oracle(const Tensor<double>& in, const ConvParams<double>& p) {
    const int k = p.kernel();
    const int ho = (in.height() + 2 * p.padding - k) / p.stride + 1;
    const int wo = (in.width() + 2 * p.padding - k) / p.stride + 1;
    Tensor<double> out(in.batch(), p.out_channels(), ho, wo);
    for (int n = 0; n < in.batch(); ++n)
        for (int o = 0; o < p.out_channels(); ++o)
            for (int y = 0; y < ho; ++y)
                for (int x = 0; x < wo; ++x) {
                    double acc = p.bias[o];
                    for (int c = 0; c < in.channels(); ++c)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = y * p.stride - p.padding + ky;
                                const int ix = x * p.stride - p.padding + kx;
                                if (iy < 0 || ix < 0 || iy >= in.height() || ix >= in.width()) continue;
                                acc += p.weight(o, c, ky, kx) * in(n, c, iy, ix);
                            }
                    out(n, o, y, x) = acc;
                }
    return out;
}

// Closed-form four-neighbour formula using floor, independent of the stencil.
inline double bilinear_oracle(const Tensor<double>& t, int c, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const double ax = x - fx, ay = y - fy;
    auto at = [&](double yy, double xx) {
        const int iy = static_cast<int>(yy), ix = static_cast<int>(xx);
        if (iy < 0 || ix < 0 || iy >= t.height() || ix >= t.width()) return 0.0;
        return t(0, c, iy, ix);
    };
    return (1 - ax) * (1 - ay) * at(fy, fx) + ax * (1 - ay) * at(fy, fx + 1) + (1 - ax) * ay * at(fy + 1, fx) +
           ax * ay * at(fy + 1, fx + 1);
}

inline Tensor<double> deform_oracle(const Tensor<double>& f, const Tensor<double>& off, const Tensor<double>& wts,
                             const ConvParams<double>& p) {
    const int k = p.kernel();
    Tensor<double> out(f.batch(), p.out_channels(), f.height(), f.width());
    for (int n = 0; n < f.batch(); ++n)
        for (int o = 0; o < p.out_channels(); ++o)
            for (int y = 0; y < f.height(); ++y)
                for (int x = 0; x < f.width(); ++x) {
                    double acc = p.bias[o];
                    for (int t = 0; t < k * k; ++t) {
                        const int ky = t / k, kx = t % k;
                        const double sx = x - p.padding + kx + off(n, 2 * t, y, x);
                        const double sy = y - p.padding + ky + off(n, 2 * t + 1, y, x);
                        for (int c = 0; c < f.channels(); ++c) {
                            const Tensor<double> item = batch_item(f, n);
                            acc += p.weight(o, c, ky, kx) * wts(n, t, y, x) * bilinear_oracle(item, c, sx, sy);
                        }
                    }
                    out(n, o, y, x) = acc;
                }
    return out;
}


// Largest r keeping IoU >= ov for one corner configuration, found by bisection
// on boxes built explicitly and scored with a direct IoU.
inline double radius_case_oracle(double w, double h, double ov, int which) {
    auto box_iou = [](double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2, double by2) {
        const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
        const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
        const double inter = iw * ih;
        return inter / ((ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter);
    };
    auto score = [&](double r) {
        switch (which) {
        case 0: return box_iou(0, 0, w, h, r, r, w + r, h + r);    // translated
        case 1: return box_iou(0, 0, w, h, r, r, w - r, h - r);    // shrunk
        default: return box_iou(0, 0, w, h, -r, -r, w + r, h + r);  // grown
        }
    };
    double lo = 0.0, hi = which == 1 ? 0.5 * std::min(w, h) : std::max(w, h) * 4;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (score(mid) >= ov ? lo : hi) = mid;
    }
    return lo;
}

inline double radius_oracle(double w, double h, double ov) {
    if (w <= 0 || h <= 0) return 0.0;
    return std::min({radius_case_oracle(w, h, ov, 0), radius_case_oracle(w, h, ov, 1), radius_case_oracle(w, h, ov, 2)});
}

// Per-pixel re-evaluation of the signed interaction mask: each pixel takes the
// largest positive Gaussian covering it, and only if none covers it, the most
// negative hard-negative Gaussian.
inline Tensor<double> mask_oracle(const std::vector<HoiAnnotation>& annos, const HoiCategoryTable& table, int fh,
                                  int fw, int stride, double ov) {
    struct Splat {
        int x, y, r, verb;
        bool positive;
    };
    std::vector<Splat> splats;
    auto cell = [&](const HoiAnnotation& a) {
        const double mx = (a.human.x1 + a.human.x2 + a.object.x1 + a.object.x2) / 4.0 / stride;
        const double my = (a.human.y1 + a.human.y2 + a.object.y1 + a.object.y2) / 4.0 / stride;
        return std::pair{std::clamp(static_cast<int>(std::floor(mx)), 0, fw - 1),
                         std::clamp(static_cast<int>(std::floor(my)), 0, fh - 1)};
    };
    for (const auto& a : annos) {
        const double uw = (std::max(a.human.x2, a.object.x2) - std::min(a.human.x1, a.object.x1)) / stride;
        const double uh = (std::max(a.human.y2, a.object.y2) - std::min(a.human.y1, a.object.y1)) / stride;
        const int r = static_cast<int>(std::floor(radius_oracle(uw, uh, ov)));
        const auto [x, y] = cell(a);
        splats.push_back({x, y, r, a.verb, true});
        for (int v = 0; v < table.verbs(); ++v) {
            if (v == a.verb || !table.is_meaningful(v, a.object_class)) continue;
            bool labelled = false;
            for (const auto& b : annos) {
                if (b.verb == v && b.object_class == a.object_class && cell(b) == cell(a)) labelled = true;
            }
            if (!labelled) splats.push_back({x, y, r, v, false});
        }
    }
    Tensor<double> m(1, table.verbs(), fh, fw);
    for (int v = 0; v < table.verbs(); ++v)
        for (int y = 0; y < fh; ++y)
            for (int x = 0; x < fw; ++x) {
                double pos = 0.0, neg = 0.0;
                for (const auto& s : splats) {
                    if (s.verb != v || std::abs(x - s.x) > s.r || std::abs(y - s.y) > s.r) continue;
                    const double sigma = (2.0 * s.r + 1.0) / 6.0;
                    const double g = std::exp(-((x - s.x) * (x - s.x) + (y - s.y) * (y - s.y)) / (2 * sigma * sigma));
                    if (s.positive) {
                        pos = std::max(pos, g);
                    } else {
                        neg = std::min(neg, -g);
                    }
                }
                m(0, v, y, x) = pos > 0 ? pos : neg;
            }
    return m;
}

// Three-branch hard-negative attentive loss, one pixel at a time.
inline double hna_oracle(const Tensor<double>& p, const Tensor<double>& m, double alpha, double beta, double gamma,
                         int n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p[i], mi = m[i];
        if (mi == 1.0) {
            sum += std::pow(1 - pi, alpha) * std::log(pi);
        } else if (mi < 0.0) {
            sum += std::pow(1 - mi, beta) * std::pow(pi, alpha) * std::log(1 - pi);
        } else {
            sum += std::pow(1 - mi, gamma) * std::pow(pi, alpha) * std::log(1 - pi);
        }
    }
    return -sum / std::max(n, 1);
}


// Keep a value iff no neighbour in its 3x3 window is strictly larger.
template <typename Scalar>
Tensor<Scalar> maxpool_oracle(const Tensor<Scalar>& t) {
    Tensor<Scalar> out(t.shape());
    for (int n = 0; n < t.batch(); ++n)
        for (int c = 0; c < t.channels(); ++c)
            for (int y = 0; y < t.height(); ++y)
                for (int x = 0; x < t.width(); ++x) {
                    bool keep = true;
                    for (int yy = y - 1; yy <= y + 1; ++yy)
                        for (int xx = x - 1; xx <= x + 1; ++xx) {
                            if (yy < 0 || xx < 0 || yy >= t.height() || xx >= t.width()) continue;
                            if (t(n, c, yy, xx) > t(n, c, y, x)) keep = false;
                        }
                    out(n, c, y, x) = keep ? t(n, c, y, x) : Scalar(0);
                }
    return out;
}

// Full sort of one batch item by (score desc, channel, y, x), truncated to k.
template <typename Scalar>
std::vector<Peak<Scalar>> topk_oracle(const Tensor<Scalar>& t, int k, int batch = 0) {
    std::vector<Peak<Scalar>> all;
    for (int c = 0; c < t.channels(); ++c)
        for (int y = 0; y < t.height(); ++y)
            for (int x = 0; x < t.width(); ++x) all.push_back({t(batch, c, y, x), c, y, x});
    std::sort(all.begin(), all.end(), [](const Peak<Scalar>& a, const Peak<Scalar>& b) {
        if (a.score != b.score) return a.score > b.score;
        return std::tie(a.channel, a.y, a.x) < std::tie(b.channel, b.y, b.x);
    });
    if (static_cast<int>(all.size()) > k) all.resize(static_cast<std::size_t>(k));
    return all;
}

// Exhaustive argmin of distance / score, ranking all candidates by
// (cost, -score, channel, y, x).
inline std::optional<PointCandidate> match_oracle(int ipx, int ipy, double dx, double dy,
                                                  std::vector<PointCandidate> cands, bool l2 = false) {
    if (cands.empty()) return std::nullopt;
    const double tx = ipx - dx, ty = ipy - dy;
    auto cost = [&](const PointCandidate& c) {
        const double ex = tx - c.x, ey = ty - c.y;
        return (l2 ? std::hypot(ex, ey) : std::abs(ex) + std::abs(ey)) / c.score;
    };
    std::sort(cands.begin(), cands.end(), [&](const PointCandidate& a, const PointCandidate& b) {
        return std::make_tuple(cost(a), -a.score, a.channel, a.y, a.x) <
               std::make_tuple(cost(b), -b.score, b.channel, b.y, b.x);
    });
    return cands.front();
}

} // namespace ggnet::oracle
