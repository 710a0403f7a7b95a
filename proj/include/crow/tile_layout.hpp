#pragma once

#include <cstdint>
#include <vector>

namespace crow {

/// Parameters of the cropping-window transformation.
struct CrowConfig {
    /// Tile side length in pixels.
    std::int64_t alpha = 512;
    /// Minimum relative overlap of adjacent tiles, in [0, 1).
    double beta = 0.25;
    /// Full-frame down-scaling factor, in (0, 1].
    double gamma = 1.0;
    /// Fraction of a box's area that must survive clipping for it to be kept.
    double min_visibility = 0.1;
    bool include_full_frame = true;

    /// Throws ArgumentError if any field is out of range.
    void validate() const;

    bool operator==(const CrowConfig&) const = default;
};

struct TileSpec {
    std::int64_t origin_x = 0;
    std::int64_t origin_y = 0;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::int64_t row = 0;
    std::int64_t col = 0;

    std::int64_t right() const { return origin_x + width; }
    std::int64_t bottom() const { return origin_y + height; }

    bool operator==(const TileSpec&) const = default;
};

/// Corner-anchored overlapping tile pattern of one image, row-major.
struct TileLayout {
    std::int64_t image_width = 0;
    std::int64_t image_height = 0;
    std::vector<TileSpec> tiles;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    /// Real-valued distance between consecutive tile origins (0 for one tile).
    double stride_x = 0.0;
    double stride_y = 0.0;
    /// True when the image is smaller than alpha on exactly one axis, so
    /// tiles are not square.
    bool rectangular = false;

    /// Tile at (row, col), or nullptr when out of range.
    const TileSpec* find(std::int64_t row, std::int64_t col) const;

    bool operator==(const TileLayout&) const = default;
};

/// Number of tiles needed along an axis of the given extent.
std::int64_t axis_tile_count(std::int64_t extent, std::int64_t alpha, double beta);

/// Tile origins along one axis: first at 0, last at extent - alpha, the rest
/// equally spaced and rounded half-up.
std::vector<std::int64_t> axis_positions(std::int64_t extent, std::int64_t alpha, double beta);

TileLayout compute_layout(std::int64_t image_width, std::int64_t image_height, const CrowConfig& cfg);

/// Largest box side (whole pixels) that is guaranteed to lie uncut inside at
/// least one tile: floor(alpha * beta).
std::int64_t uncut_guarantee_bound(const CrowConfig& cfg);

}  // namespace crow
