#pragma once

// Role mAP over HOI triplets: per-category AP with both boxes at IoU >= 0.5,
// Default and Known-Object modes, full / rare / non-rare aggregation.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ggnet/hoi.hpp"

namespace ggnet {

enum class EvalMode { dt, ko };

enum class ApInterpolation { all_point, eleven_point };

/// Area under the precision/recall curve of a ranked list of true/false
/// positive flags against `num_gt` ground truths. Zero when num_gt is 0.
double ap_from_flags(const std::vector<bool>& tp, std::size_t num_gt,
                     ApInterpolation interp = ApInterpolation::all_point);

struct RankedDetection {
    std::string image_id;
    HoiTriplet triplet;
};

/// Greedy matching in the given order: a detection is a true positive when
/// both boxes reach `iou_thresh` with a not yet matched ground truth of the
/// same image; among several, the one with the largest min(IoU_h, IoU_o).
std::vector<bool> match_detections(const std::vector<RankedDetection>& ranked,
                                   const std::map<std::string, std::vector<HoiAnnotation>>& gts,
                                   double iou_thresh = 0.5);

/// AP of one category. Detections are ranked by descending score (stable).
double average_precision(std::vector<RankedDetection> detections,
                         const std::map<std::string, std::vector<HoiAnnotation>>& gts, double iou_thresh = 0.5,
                         ApInterpolation interp = ApInterpolation::all_point);

struct EvalOptions {
    double iou_thresh = 0.5;
    ApInterpolation interp = ApInterpolation::all_point;
};

struct EvalResult {
    EvalMode mode = EvalMode::dt;
    std::map<HoiCategoryTable::Pair, double> ap;  // categories with at least one ground truth
    std::optional<double> full, rare, non_rare;
    std::size_t num_rare = 0, num_non_rare = 0;
    std::size_t dropped_unknown = 0;  // detections of non-meaningful pairs

    /// Ordered key/value metrics: "<mode>_full_map", ..., per-category "<mode>_ap_v<verb>_o<object>".
    [[nodiscard]] std::vector<std::pair<std::string, double>> metrics() const;
};

EvalResult evaluate(const TripletMap& detections, const AnnotationMap& gts, const HoiCategoryTable& table,
                    EvalMode mode, const EvalOptions& opt = {});

std::string mode_name(EvalMode mode);
EvalMode parse_mode(const std::string& name);

using Metrics = std::vector<std::pair<std::string, double>>;

/// One "key = value" line per metric.
void write_metrics_text(std::ostream& os, const Metrics& metrics);
/// Flat JSON object with the same keys.
void write_metrics_json(std::ostream& os, const Metrics& metrics);
void save_metrics(const std::filesystem::path& text_path, const std::filesystem::path& json_path,
                  const Metrics& metrics);

} // namespace ggnet
