#include "crow/tile_layout.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crow/errors.hpp"

namespace crow {

namespace {

// Slack for ceil() on quotients that are integral in exact arithmetic but land
// a few ulps above in floating point (e.g. 921.6 / 460.8).
constexpr double kCeilSlack = 1e-9;

}  // namespace

void CrowConfig::validate() const {
    if (alpha < 1) {
        throw ArgumentError("tile size must be >= 1, got " + std::to_string(alpha));
    }
    if (!(beta >= 0.0 && beta < 1.0)) {
        throw ArgumentError("overlap must be in [0, 1), got " + std::to_string(beta));
    }
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw ArgumentError("downscale factor must be in (0, 1], got " + std::to_string(gamma));
    }
    if (!(min_visibility >= 0.0 && min_visibility <= 1.0)) {
        throw ArgumentError("min visibility must be in [0, 1], got " + std::to_string(min_visibility));
    }
}

const TileSpec* TileLayout::find(std::int64_t row, std::int64_t col) const {
    if (row < 0 || col < 0 || row >= rows || col >= cols) {
        return nullptr;
    }
    return &tiles[static_cast<std::size_t>(row * cols + col)];
}

std::int64_t axis_tile_count(std::int64_t extent, std::int64_t alpha, double beta) {
    if (extent <= alpha) {
        return 1;
    }
    const double max_stride = static_cast<double>(alpha) * (1.0 - beta);
    const double q = static_cast<double>(extent - alpha) / max_stride;
    return static_cast<std::int64_t>(std::ceil(q - kCeilSlack)) + 1;
}

std::vector<std::int64_t> axis_positions(std::int64_t extent, std::int64_t alpha, double beta) {
    const std::int64_t n = axis_tile_count(extent, alpha, beta);
    if (n == 1) {
        return {0};
    }
    const std::int64_t span = extent - alpha;
    const std::int64_t den = n - 1;
    std::vector<std::int64_t> pos(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        // round_half_up(k * span / den) in exact integer arithmetic
        pos[static_cast<std::size_t>(k)] = (2 * k * span + den) / (2 * den);
    }
    return pos;
}

TileLayout compute_layout(std::int64_t image_width, std::int64_t image_height, const CrowConfig& cfg) {
    if (image_width <= 0 || image_height <= 0) {
        throw ArgumentError("image dimensions must be positive, got " + std::to_string(image_width) + "x" +
                            std::to_string(image_height));
    }
    cfg.validate();

    const auto xs = axis_positions(image_width, cfg.alpha, cfg.beta);
    const auto ys = axis_positions(image_height, cfg.alpha, cfg.beta);
    const std::int64_t tile_w = std::min(cfg.alpha, image_width);
    const std::int64_t tile_h = std::min(cfg.alpha, image_height);

    TileLayout layout;
    layout.image_width = image_width;
    layout.image_height = image_height;
    layout.rows = static_cast<std::int64_t>(ys.size());
    layout.cols = static_cast<std::int64_t>(xs.size());
    layout.stride_x = xs.size() > 1 ? static_cast<double>(image_width - cfg.alpha) / static_cast<double>(xs.size() - 1) : 0.0;
    layout.stride_y = ys.size() > 1 ? static_cast<double>(image_height - cfg.alpha) / static_cast<double>(ys.size() - 1) : 0.0;
    layout.rectangular = tile_w != tile_h;
    layout.tiles.reserve(xs.size() * ys.size());
    for (std::size_t r = 0; r < ys.size(); ++r) {
        for (std::size_t c = 0; c < xs.size(); ++c) {
            layout.tiles.push_back({xs[c], ys[r], tile_w, tile_h, static_cast<std::int64_t>(r),
                                    static_cast<std::int64_t>(c)});
        }
    }
    return layout;
}

std::int64_t uncut_guarantee_bound(const CrowConfig& cfg) {
    // Rounded origins are at most ceil(alpha * (1 - beta)) apart, and alpha is
    // integral, so a box of side floor(alpha * beta) always fits one window.
    return static_cast<std::int64_t>(std::floor(static_cast<double>(cfg.alpha) * cfg.beta + kCeilSlack));
}

}  // namespace crow
