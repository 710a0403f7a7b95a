#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "crow/dataset.hpp"
#include "crow/tile_layout.hpp"

namespace crow {

struct ClippedBox {
    /// Intersection with the tile, in tile coordinates.
    BoundingBox box;
    /// Intersection area over original box area.
    double visibility = 0.0;
};

/// Intersects `box` (image coordinates) with `tile`. Returns nullopt when the
/// intersection has zero area.
std::optional<ClippedBox> clip_box(const BoundingBox& box, const TileSpec& tile);

/// One emitted tile: a crop of the source raster plus its remapped boxes.
struct TileSample {
    std::int64_t source_image_id = 0;
    TileSpec tile;
    std::string out_file_name;
    /// Boxes relative to the tile origin. Never empty. `id` and `image_id`
    /// still refer to the source records; run_crow reassigns them.
    std::vector<AnnotationRecord> annotations;
    /// View into the source raster; shares its memory.
    cv::Mat raster;
};

struct ImageTileCounts {
    std::int64_t image_id = 0;
    std::int64_t layout_tiles = 0;
    std::int64_t emitted = 0;
    std::int64_t discarded = 0;

    bool operator==(const ImageTileCounts&) const = default;
};

/// Output file name of a tile: "<image_id>_r<row>_c<col>.<ext>".
std::string tile_file_name(std::int64_t image_id, const TileSpec& tile, const std::string& ext);
/// Output file name of a down-scaled full frame: "<image_id>_full.<ext>".
std::string full_frame_file_name(std::int64_t image_id, const std::string& ext);

/// Splits one image into its layout tiles and keeps those that contain at
/// least one box with visibility >= cfg.min_visibility. `annotations` must
/// all belong to `image`. When `counts` is given it receives the emitted and
/// discarded tile counts.
std::vector<TileSample> divide_image(const ImageRecord& image, const cv::Mat& raster,
                                     std::span<const AnnotationRecord> annotations, const CrowConfig& cfg,
                                     const std::string& ext = "png", ImageTileCounts* counts = nullptr);

struct DownscaleResult {
    cv::Mat raster;
    std::vector<AnnotationRecord> annotations;
    std::int64_t width = 0;
    std::int64_t height = 0;
    /// Boxes whose scaled side fell below one pixel and was raised to 1.
    std::int64_t clamped_boxes = 0;
};

/// Bilinear resize to (round(w*gamma), round(h*gamma)); boxes scaled by
/// gamma and kept inside the new bounds. With gamma == 1 the raster is
/// returned unchanged.
DownscaleResult downscale_image(const ImageRecord& image, const cv::Mat& raster,
                                std::span<const AnnotationRecord> annotations, double gamma);

/// Down-scale factor that brings the longer image side to `max_side`
/// (1 if the image is already small enough).
double gamma_for_max_side(std::int64_t width, std::int64_t height, std::int64_t max_side);

struct ImageFailure {
    std::int64_t image_id = 0;
    std::string error;

    bool operator==(const ImageFailure&) const = default;
};

struct PipelineManifest {
    CrowConfig config;
    std::vector<ImageTileCounts> images;
    std::vector<ImageFailure> failures;
    std::int64_t tiles_emitted = 0;
    std::int64_t tiles_discarded = 0;
    std::int64_t full_frames = 0;
    std::int64_t total_samples = 0;
    std::int64_t total_annotations = 0;
    std::int64_t cut_annotations = 0;
    std::int64_t clamped_boxes = 0;
    /// Not serialized into manifest.json so that the file stays a pure
    /// function of the inputs.
    std::chrono::duration<double> wall_clock{0.0};

    /// Canonical JSON text of everything except wall_clock.
    std::string to_json() const;
};

struct PipelineOptions {
    CrowConfig config;
    std::filesystem::path image_dir;
    std::filesystem::path out_dir;
    std::size_t workers = 1;
    /// "png" (lossless) or "jpg".
    std::string image_format = "png";
};

struct PipelineResult {
    DatasetIndex dataset;
    PipelineManifest manifest;
};

/// Runs the whole transformation over `input`, writing
/// `<out>/images/*`, `<out>/annotations.json` and `<out>/manifest.json`.
/// Per-image failures are recorded in the manifest and do not stop the run.
PipelineResult run_crow(const DatasetIndex& input, const PipelineOptions& opts);

}  // namespace crow
