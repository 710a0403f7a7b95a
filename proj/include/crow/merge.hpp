#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crow/dataset.hpp"
#include "crow/tile_layout.hpp"

namespace crow {

struct TileIndex {
    std::int64_t row = 0;
    std::int64_t col = 0;

    bool operator==(const TileIndex&) const = default;
};

struct DetectionRecord {
    std::int64_t image_id = 0;
    BoundingBox bbox;
    std::int64_t category_id = 0;
    double score = 0.0;
    /// Tile the box coordinates are relative to; nullopt means full-frame.
    std::optional<TileIndex> tile;

    bool operator==(const DetectionRecord&) const = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

/// Translates tile-relative detections by their tile origin and clamps them
/// to the image. Detections without a tile pass through (clamped only).
/// Boxes that clamp to zero area are dropped. Throws ArgumentError for a
/// tile index that is not in `layout`.
std::vector<DetectionRecord> remap_to_frame(std::span<const DetectionRecord> dets, const TileLayout& layout);

/// Greedy hard NMS per category. Candidates are visited by descending score,
/// ties by input position; a candidate survives iff its IoU with every kept
/// box of its category is below `iou_threshold`. Output is in visiting order.
std::vector<DetectionRecord> nms(std::span<const DetectionRecord> dets, double iou_threshold);

/// Tiled-inference baseline: per image, remap tile detections into the frame
/// of the image's layout and merge them with nms. Output is grouped by image
/// id ascending.
std::vector<DetectionRecord> merge_tiled_detections(std::span<const DetectionRecord> dets, const DatasetIndex& images,
                                                    const CrowConfig& cfg, double iou_threshold,
                                                    std::size_t workers = 1);

std::vector<DetectionRecord> parse_detections(std::string_view json_text);
std::string dump_detections(std::span<const DetectionRecord> dets);
std::vector<DetectionRecord> load_detections(const std::filesystem::path& path);
void save_detections(std::span<const DetectionRecord> dets, const std::filesystem::path& path);

}  // namespace crow
