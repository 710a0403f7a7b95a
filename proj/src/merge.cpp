#include "crow/merge.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "crow/errors.hpp"
#include "crow/worker_pool.hpp"

namespace crow {

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<DetectionRecord> remap_to_frame(std::span<const DetectionRecord> dets, const TileLayout& layout) {
    const double w = static_cast<double>(layout.image_width);
    const double h = static_cast<double>(layout.image_height);
    std::vector<DetectionRecord> out;
    out.reserve(dets.size());
    for (const DetectionRecord& det : dets) {
        DetectionRecord r = det;
        if (det.tile) {
            const TileSpec* tile = layout.find(det.tile->row, det.tile->col);
            if (!tile) {
                throw ArgumentError("detection on image " + std::to_string(det.image_id) + " refers to tile [" +
                                    std::to_string(det.tile->row) + ", " + std::to_string(det.tile->col) +
                                    "] which is not in a " + std::to_string(layout.rows) + "x" +
                                    std::to_string(layout.cols) + " layout");
            }
            r.bbox.x += static_cast<double>(tile->origin_x);
            r.bbox.y += static_cast<double>(tile->origin_y);
            r.tile.reset();
        }
        const double x0 = std::clamp(r.bbox.x, 0.0, w);
        const double y0 = std::clamp(r.bbox.y, 0.0, h);
        const double x1 = std::clamp(r.bbox.right(), 0.0, w);
        const double y1 = std::clamp(r.bbox.bottom(), 0.0, h);
        if (x1 <= x0 || y1 <= y0) continue;
        if (x0 != r.bbox.x || y0 != r.bbox.y || x1 != r.bbox.right() || y1 != r.bbox.bottom()) {
            r.bbox = {x0, y0, x1 - x0, y1 - y0};
        }
        out.push_back(r);
    }
    return out;
}

std::vector<DetectionRecord> nms(std::span<const DetectionRecord> dets, double iou_threshold) {
    if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
        throw ArgumentError("NMS IoU threshold must be in [0, 1]");
    }
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

    std::map<std::int64_t, std::vector<std::size_t>> kept_by_category;
    std::vector<DetectionRecord> kept;
    for (std::size_t i : order) {
        auto& same_cat = kept_by_category[dets[i].category_id];
        const bool suppressed = std::any_of(same_cat.begin(), same_cat.end(), [&](std::size_t k) {
            return iou(dets[i].bbox, dets[k].bbox) >= iou_threshold;
        });
        if (suppressed) continue;
        same_cat.push_back(i);
        kept.push_back(dets[i]);
    }
    return kept;
}

std::vector<DetectionRecord> merge_tiled_detections(std::span<const DetectionRecord> dets, const DatasetIndex& images,
                                                    const CrowConfig& cfg, double iou_threshold, std::size_t workers) {
    std::map<std::int64_t, const ImageRecord*> image_by_id;
    for (const auto& img : images.images) image_by_id[img.id] = &img;

    std::map<std::int64_t, std::vector<DetectionRecord>> grouped;
    for (const auto& det : dets) {
        if (!image_by_id.contains(det.image_id)) {
            throw ReferenceError("detection refers to unknown image_id " + std::to_string(det.image_id));
        }
        grouped[det.image_id].push_back(det);
    }

    std::vector<const std::vector<DetectionRecord>*> groups;
    std::vector<std::int64_t> ids;
    for (const auto& [id, g] : grouped) {
        ids.push_back(id);
        groups.push_back(&g);
    }
    std::vector<std::vector<DetectionRecord>> merged(groups.size());
    parallel_for(groups.size(), workers, [&](std::size_t i) {
        const ImageRecord& img = *image_by_id.at(ids[i]);
        const TileLayout layout = compute_layout(img.width, img.height, cfg);
        merged[i] = nms(remap_to_frame(*groups[i], layout), iou_threshold);
    });

    std::vector<DetectionRecord> out;
    for (auto& m : merged) out.insert(out.end(), m.begin(), m.end());
    return out;
}

namespace {

using json = nlohmann::json;

DetectionRecord parse_detection(const json& j, std::size_t pos) {
    const std::string where = "detections[" + std::to_string(pos) + "]";
    if (!j.is_object()) throw ValidationError(where + " must be an object");
    auto need = [&](const char* key) -> const json& {
        auto it = j.find(key);
        if (it == j.end()) throw ValidationError(where + ": missing field \"" + key + "\"");
        return *it;
    };
    auto as_int = [&](const json& v, const char* key) {
        if (!v.is_number_integer()) throw ValidationError(where + ": \"" + key + "\" must be an integer");
        return v.get<std::int64_t>();
    };
    auto as_num = [&](const json& v, const char* key) {
        if (!v.is_number()) throw ValidationError(where + ": \"" + key + "\" must be a number");
        return v.get<double>();
    };

    DetectionRecord d;
    d.image_id = as_int(need("image_id"), "image_id");
    d.category_id = as_int(need("category_id"), "category_id");
    d.score = as_num(need("score"), "score");
    const json& bbox = need("bbox");
    if (!bbox.is_array() || bbox.size() != 4) throw ValidationError(where + ": bbox must be an array of 4 numbers");
    d.bbox = {as_num(bbox[0], "bbox"), as_num(bbox[1], "bbox"), as_num(bbox[2], "bbox"), as_num(bbox[3], "bbox")};
    if (auto it = j.find("tile"); it != j.end() && !it->is_null()) {
        if (!it->is_array() || it->size() != 2) throw ValidationError(where + ": tile must be [row, col]");
        d.tile = TileIndex{as_int((*it)[0], "tile"), as_int((*it)[1], "tile")};
    }

    if (!(d.score >= 0.0 && d.score <= 1.0)) throw ValidationError(where + ": score must be in [0, 1]");
    if (!(d.bbox.w > 0.0 && d.bbox.h > 0.0)) throw ValidationError(where + ": bbox width and height must be positive");
    return d;
}

}  // namespace

std::vector<DetectionRecord> parse_detections(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    if (!root.is_array()) throw ValidationError("detections file must be a JSON array");
    std::vector<DetectionRecord> dets;
    dets.reserve(root.size());
    for (std::size_t i = 0; i < root.size(); ++i) dets.push_back(parse_detection(root[i], i));
    return dets;
}

std::string dump_detections(std::span<const DetectionRecord> dets) {
    nlohmann::ordered_json root = nlohmann::ordered_json::array();
    for (const auto& d : dets) {
        nlohmann::ordered_json j;
        j["image_id"] = d.image_id;
        if (d.tile) j["tile"] = {d.tile->row, d.tile->col};
        j["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
        j["category_id"] = d.category_id;
        j["score"] = d.score;
        root.push_back(std::move(j));
    }
    return root.dump(1) + "\n";
}

std::vector<DetectionRecord> load_detections(const std::filesystem::path& path) {
    return parse_detections(read_text_file(path));
}

void save_detections(std::span<const DetectionRecord> dets, const std::filesystem::path& path) {
    write_text_file(path, dump_detections(dets));
}

}  // namespace crow
