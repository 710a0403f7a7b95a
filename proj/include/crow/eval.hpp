#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crow/dataset.hpp"
#include "crow/merge.hpp"

namespace crow {

struct EvalConfig {
    /// Strictly increasing, each in (0, 1].
    std::vector<double> iou_thresholds = coco_thresholds();
    /// Detections kept per image and category, highest score first.
    std::int64_t max_dets = 500;

    void validate() const;

    /// 0.50, 0.55, ..., 0.95.
    static std::vector<double> coco_thresholds();
};

struct EvalResult {
    /// Mean over thresholds and over categories that have ground truth.
    double map = 0.0;
    /// AP at IoU 0.5 averaged over categories, when 0.5 is among the thresholds.
    std::optional<double> map50;
    std::vector<double> thresholds;
    /// Category-averaged AP per threshold.
    std::vector<double> per_threshold;
    /// Threshold-averaged AP per category with ground truth.
    std::map<std::int64_t, double> per_category;

    std::string to_json(const DatasetIndex& gt) const;
};

/// COCO-protocol mean Average Precision: greedy highest-IoU matching in
/// score order, crowd boxes as ignore regions, 101-point interpolated AP.
/// `dets` must be in full-frame coordinates and reference images and
/// categories of `gt`.
EvalResult evaluate(const DatasetIndex& gt, std::span<const DetectionRecord> dets, const EvalConfig& cfg,
                    std::size_t workers = 1);

}  // namespace crow
