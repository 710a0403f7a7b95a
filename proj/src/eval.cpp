#include "crow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "crow/errors.hpp"
#include "crow/worker_pool.hpp"

namespace crow {

namespace {

constexpr int kRecallPoints = 101;

// Same grid as numpy.linspace(0, 1, 101): i * step with an exact endpoint.
double recall_point(int i) {
    return i == kRecallPoints - 1 ? 1.0 : static_cast<double>(i) * (1.0 / (kRecallPoints - 1));
}

// Crowd regions are scored by the fraction of the detection they cover.
double crowd_overlap(const BoundingBox& det, const BoundingBox& crowd) {
    const double iw = std::min(det.right(), crowd.right()) - std::max(det.x, crowd.x);
    const double ih = std::min(det.bottom(), crowd.bottom()) - std::max(det.y, crowd.y);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    return (iw * ih) / det.area();
}

struct GtBox {
    BoundingBox box;
    bool crowd = false;
};

struct ScoredDet {
    BoundingBox box;
    double score = 0.0;
};

// One (image, category) cell: ground truth with non-crowd boxes first and
// detections sorted by score and truncated.
struct Cell {
    std::vector<GtBox> gts;
    std::vector<ScoredDet> dets;
};

struct Match {
    double score;
    bool matched;
    bool ignored;
};

// Average precision of one category at one threshold, or nullopt when the
// category has no non-crowd ground truth.
std::optional<double> category_ap(const std::vector<Cell>& cells, double threshold) {
    std::int64_t positives = 0;
    std::vector<Match> matches;
    for (const Cell& cell : cells) {
        for (const GtBox& g : cell.gts) positives += g.crowd ? 0 : 1;

        std::vector<bool> gt_taken(cell.gts.size(), false);
        for (const ScoredDet& d : cell.dets) {
            double best = std::min(threshold, 1.0 - 1e-10);
            std::ptrdiff_t m = -1;
            for (std::size_t g = 0; g < cell.gts.size(); ++g) {
                if (gt_taken[g] && !cell.gts[g].crowd) continue;
                // Once matched to a regular box, never fall back to a crowd region.
                if (m >= 0 && !cell.gts[static_cast<std::size_t>(m)].crowd && cell.gts[g].crowd) break;
                const double overlap =
                    cell.gts[g].crowd ? crowd_overlap(d.box, cell.gts[g].box) : iou(d.box, cell.gts[g].box);
                if (overlap < best) continue;
                best = overlap;
                m = static_cast<std::ptrdiff_t>(g);
            }
            if (m < 0) {
                matches.push_back({d.score, false, false});
            } else {
                gt_taken[static_cast<std::size_t>(m)] = true;
                matches.push_back({d.score, true, cell.gts[static_cast<std::size_t>(m)].crowd});
            }
        }
    }
    if (positives == 0) return std::nullopt;

    std::stable_sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) { return a.score > b.score; });

    std::vector<double> recall;
    std::vector<double> precision;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    for (const Match& m : matches) {
        if (m.ignored) continue;
        if (m.matched) {
            ++tp;
        } else {
            ++fp;
        }
        recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
        precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    for (std::size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }

    double sum = 0.0;
    for (int r = 0; r < kRecallPoints; ++r) {
        auto it = std::lower_bound(recall.begin(), recall.end(), recall_point(r));
        if (it == recall.end()) break;
        sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / kRecallPoints;
}

}  // namespace

std::vector<double> EvalConfig::coco_thresholds() {
    std::vector<double> t(10);
    const double step = (0.95 - 0.5) / 9.0;
    for (int i = 0; i < 9; ++i) t[static_cast<std::size_t>(i)] = 0.5 + static_cast<double>(i) * step;
    t[9] = 0.95;
    return t;
}

void EvalConfig::validate() const {
    if (iou_thresholds.empty()) throw ArgumentError("at least one IoU threshold is required");
    for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
        const double t = iou_thresholds[i];
        if (!(t > 0.0 && t <= 1.0)) throw ArgumentError("IoU thresholds must be in (0, 1]");
        if (i > 0 && !(t > iou_thresholds[i - 1])) throw ArgumentError("IoU thresholds must be strictly increasing");
    }
    if (max_dets < 1) throw ArgumentError("max detections must be >= 1");
}

EvalResult evaluate(const DatasetIndex& gt, std::span<const DetectionRecord> dets, const EvalConfig& cfg,
                    std::size_t workers) {
    cfg.validate();

    std::vector<std::int64_t> image_ids;
    for (const auto& img : gt.images) image_ids.push_back(img.id);
    std::sort(image_ids.begin(), image_ids.end());
    std::vector<std::int64_t> category_ids;
    for (const auto& cat : gt.categories) category_ids.push_back(cat.id);
    std::sort(category_ids.begin(), category_ids.end());

    auto image_pos = [&](std::int64_t id) -> std::ptrdiff_t {
        auto it = std::lower_bound(image_ids.begin(), image_ids.end(), id);
        return it != image_ids.end() && *it == id ? it - image_ids.begin() : -1;
    };
    auto category_pos = [&](std::int64_t id) -> std::ptrdiff_t {
        auto it = std::lower_bound(category_ids.begin(), category_ids.end(), id);
        return it != category_ids.end() && *it == id ? it - category_ids.begin() : -1;
    };

    // cells[category][image]
    std::vector<std::vector<Cell>> cells(category_ids.size(), std::vector<Cell>(image_ids.size()));
    for (const auto& ann : gt.annotations) {
        const auto c = category_pos(ann.category_id);
        const auto i = image_pos(ann.image_id);
        if (c < 0 || i < 0) {
            throw ReferenceError("annotation " + std::to_string(ann.id) + " has a dangling reference");
        }
        cells[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)].gts.push_back({ann.bbox, ann.iscrowd});
    }

    // Detections sorted by score, ties by position in the input.
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    for (std::size_t k : order) {
        const DetectionRecord& d = dets[k];
        if (d.tile) {
            throw ValidationError("detection " + std::to_string(k) +
                                  " is tile-relative; merge tile detections into the frame before evaluating");
        }
        const auto c = category_pos(d.category_id);
        const auto i = image_pos(d.image_id);
        if (i < 0) throw ReferenceError("detection " + std::to_string(k) + ": unknown image_id " + std::to_string(d.image_id));
        if (c < 0) {
            throw ReferenceError("detection " + std::to_string(k) + ": unknown category_id " + std::to_string(d.category_id));
        }
        auto& cell = cells[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
        if (static_cast<std::int64_t>(cell.dets.size()) < cfg.max_dets) cell.dets.push_back({d.bbox, d.score});
    }
    for (auto& per_image : cells) {
        for (auto& cell : per_image) {
            std::stable_partition(cell.gts.begin(), cell.gts.end(), [](const GtBox& g) { return !g.crowd; });
        }
    }

    const std::size_t n_thr = cfg.iou_thresholds.size();
    std::vector<std::vector<std::optional<double>>> ap(category_ids.size(), std::vector<std::optional<double>>(n_thr));
    parallel_for(category_ids.size(), workers, [&](std::size_t c) {
        for (std::size_t t = 0; t < n_thr; ++t) ap[c][t] = category_ap(cells[c], cfg.iou_thresholds[t]);
    });

    EvalResult result;
    result.thresholds = cfg.iou_thresholds;
    result.per_threshold.assign(n_thr, 0.0);
    std::size_t valid = 0;
    double total = 0.0;
    for (std::size_t c = 0; c < category_ids.size(); ++c) {
        if (!ap[c][0]) continue;
        ++valid;
        double cat_sum = 0.0;
        for (std::size_t t = 0; t < n_thr; ++t) {
            cat_sum += *ap[c][t];
            result.per_threshold[t] += *ap[c][t];
        }
        total += cat_sum;
        result.per_category[category_ids[c]] = cat_sum / static_cast<double>(n_thr);
    }
    if (valid > 0) {
        for (double& v : result.per_threshold) v /= static_cast<double>(valid);
        result.map = total / static_cast<double>(valid * n_thr);
    }
    for (std::size_t t = 0; t < n_thr; ++t) {
        if (std::abs(cfg.iou_thresholds[t] - 0.5) < 1e-12) result.map50 = result.per_threshold[t];
    }
    return result;
}

std::string EvalResult::to_json(const DatasetIndex& gt) const {
    nlohmann::ordered_json j;
    j["map"] = map;
    if (map50) {
        j["map50"] = *map50;
    } else {
        j["map50"] = nullptr;
    }
    nlohmann::ordered_json& per_t = j["per_threshold"] = nlohmann::ordered_json::object();
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        char key[16];
        std::snprintf(key, sizeof key, "%.2f", thresholds[t]);
        per_t[key] = per_threshold[t];
    }
    nlohmann::ordered_json& per_c = j["per_category"] = nlohmann::ordered_json::object();
    for (const auto& [id, value] : per_category) {
        auto it = std::find_if(gt.categories.begin(), gt.categories.end(), [id = id](const auto& c) { return c.id == id; });
        per_c[it != gt.categories.end() ? it->name : std::to_string(id)] = value;
    }
    return j.dump(1) + "\n";
}

}  // namespace crow
