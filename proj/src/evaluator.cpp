#include "ggnet/evaluator.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>

#include <json.hpp>

#include "ggnet/errors.hpp"

namespace ggnet {

double ap_from_flags(const std::vector<bool>& tp, std::size_t num_gt, ApInterpolation interp) {
    if (num_gt == 0) return 0.0;
    std::vector<double> rec, prec;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        if (tp[i]) ++hits;
        rec.push_back(static_cast<double>(hits) / static_cast<double>(num_gt));
        prec.push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
    }
    if (interp == ApInterpolation::eleven_point) {
        double ap = 0.0;
        for (int t = 0; t <= 10; ++t) {
            double best = 0.0;
            for (std::size_t i = 0; i < rec.size(); ++i) {
                if (rec[i] >= t / 10.0 - 1e-12) best = std::max(best, prec[i]);
            }
            ap += best / 11.0;
        }
        return ap;
    }
    // Precision envelope over (0, rec..., 1) then sum of rectangles where recall moves.
    std::vector<double> mrec{0.0}, mpre{0.0};
    mrec.insert(mrec.end(), rec.begin(), rec.end());
    mpre.insert(mpre.end(), prec.begin(), prec.end());
    mrec.push_back(1.0);
    mpre.push_back(0.0);
    for (std::size_t i = mpre.size() - 1; i-- > 0;) mpre[i] = std::max(mpre[i], mpre[i + 1]);
    double ap = 0.0;
    for (std::size_t i = 1; i < mrec.size(); ++i) {
        if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
    }
    return ap;
}

std::vector<bool> match_detections(const std::vector<RankedDetection>& ranked,
                                   const std::map<std::string, std::vector<HoiAnnotation>>& gts, double iou_thresh) {
    std::map<std::string, std::vector<bool>> used;
    for (const auto& [id, list] : gts) used[id].assign(list.size(), false);
    std::vector<bool> tp;
    tp.reserve(ranked.size());
    for (const auto& d : ranked) {
        const auto it = gts.find(d.image_id);
        if (it == gts.end()) {
            tp.push_back(false);
            continue;
        }
        auto& taken = used[d.image_id];
        double best = -1.0;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < it->second.size(); ++j) {
            if (taken[j]) continue;
            const auto& g = it->second[j];
            const double score = std::min(iou(d.triplet.human, g.human), iou(d.triplet.object, g.object));
            if (score >= iou_thresh && score > best) {
                best = score;
                best_j = j;
            }
        }
        if (best >= 0.0) taken[best_j] = true;
        tp.push_back(best >= 0.0);
    }
    return tp;
}

double average_precision(std::vector<RankedDetection> detections,
                         const std::map<std::string, std::vector<HoiAnnotation>>& gts, double iou_thresh,
                         ApInterpolation interp) {
    std::stable_sort(detections.begin(), detections.end(),
                     [](const RankedDetection& a, const RankedDetection& b) { return a.triplet.score > b.triplet.score; });
    std::size_t num_gt = 0;
    for (const auto& [id, list] : gts) num_gt += list.size();
    return ap_from_flags(match_detections(detections, gts, iou_thresh), num_gt, interp);
}

std::string mode_name(EvalMode mode) { return mode == EvalMode::dt ? "dt" : "ko"; }

EvalMode parse_mode(const std::string& name) {
    if (name == "dt") return EvalMode::dt;
    if (name == "ko") return EvalMode::ko;
    throw ConfigError("unknown evaluation mode '" + name + "' (expected dt or ko)");
}

EvalResult evaluate(const TripletMap& detections, const AnnotationMap& gts, const HoiCategoryTable& table,
                    EvalMode mode, const EvalOptions& opt) {
    EvalResult r;
    r.mode = mode;

    // Detections and ground truth grouped by category.
    std::map<HoiCategoryTable::Pair, std::vector<RankedDetection>> dets_by_cat;
    for (const auto& [id, list] : detections) {
        for (const auto& t : list) {
            if (!table.is_meaningful(t.verb, t.object_class)) {
                ++r.dropped_unknown;
                continue;
            }
            dets_by_cat[{t.verb, t.object_class}].push_back({id, t});
        }
    }
    std::map<std::string, std::set<int>> objects_in_image;
    for (const auto& [id, list] : gts) {
        for (const auto& a : list) objects_in_image[id].insert(a.object_class);
    }
    auto in_scope = [&](const std::string& id, int object_class) {
        if (mode == EvalMode::dt) return true;
        const auto it = objects_in_image.find(id);
        return it != objects_in_image.end() && it->second.count(object_class) != 0;
    };

    double sum_rare = 0, sum_non_rare = 0;
    for (const auto& cat : table.meaningful()) {
        const auto [v, o] = cat;
        std::map<std::string, std::vector<HoiAnnotation>> cat_gts;
        std::size_t num_gt = 0;
        for (const auto& [id, list] : gts) {
            if (!in_scope(id, o)) continue;
            for (const auto& a : list) {
                if (a.verb == v && a.object_class == o) {
                    cat_gts[id].push_back(a);
                    ++num_gt;
                }
            }
        }
        if (num_gt == 0) continue;
        std::vector<RankedDetection> cat_dets;
        for (const auto& d : dets_by_cat[cat]) {
            if (in_scope(d.image_id, o)) cat_dets.push_back(d);
        }
        const double ap = average_precision(std::move(cat_dets), cat_gts, opt.iou_thresh, opt.interp);
        r.ap[cat] = ap;
        if (table.is_rare(v, o)) {
            sum_rare += ap;
            ++r.num_rare;
        } else {
            sum_non_rare += ap;
            ++r.num_non_rare;
        }
    }
    if (r.num_rare > 0) r.rare = sum_rare / static_cast<double>(r.num_rare);
    if (r.num_non_rare > 0) r.non_rare = sum_non_rare / static_cast<double>(r.num_non_rare);
    if (!r.ap.empty()) r.full = (sum_rare + sum_non_rare) / static_cast<double>(r.ap.size());
    return r;
}

std::vector<std::pair<std::string, double>> EvalResult::metrics() const {
    const std::string p = mode_name(mode) + "_";
    std::vector<std::pair<std::string, double>> m;
    if (full) m.emplace_back(p + "full_map", *full);
    if (rare) m.emplace_back(p + "rare_map", *rare);
    if (non_rare) m.emplace_back(p + "nonrare_map", *non_rare);
    m.emplace_back(p + "categories", static_cast<double>(ap.size()));
    m.emplace_back(p + "rare_categories", static_cast<double>(num_rare));
    m.emplace_back(p + "dropped_unknown", static_cast<double>(dropped_unknown));
    for (const auto& [cat, v] : ap) {
        m.emplace_back(p + "ap_v" + std::to_string(cat.first) + "_o" + std::to_string(cat.second), v);
    }
    return m;
}

void write_metrics_text(std::ostream& os, const Metrics& metrics) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& [k, v] : metrics) os << k << " = " << v << '\n';
}

void write_metrics_json(std::ostream& os, const Metrics& metrics) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : metrics) j[k] = v;
    os << j.dump(2) << '\n';
}

void save_metrics(const std::filesystem::path& text_path, const std::filesystem::path& json_path,
                  const Metrics& metrics) {
    std::ofstream t(text_path);
    std::ofstream j(json_path);
    if (!t || !j) throw DataError("cannot write metrics to " + text_path.string());
    write_metrics_text(t, metrics);
    write_metrics_json(j, metrics);
}

} // namespace ggnet
