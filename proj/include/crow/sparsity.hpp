#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crow/dataset.hpp"

namespace crow {

/// Exact area of the union of axis-aligned rectangles. Plane sweep over x
/// with a coverage segment tree on the compressed y coordinates,
/// O(n log n).
double union_area(std::span<const BoundingBox> boxes);

struct ImageSparsity {
    std::int64_t image_id = 0;
    /// Union of the image's boxes, clamped to the image.
    double foreground = 0.0;
    double pixels = 0.0;
    double ratio = 0.0;
};

struct SparsityReport {
    std::vector<ImageSparsity> images;
    double total_foreground = 0.0;
    double total_pixels = 0.0;
    /// total_foreground / total_pixels, 0 for an empty dataset.
    double ratio = 0.0;
    /// Counts of per-image ratios in equal-width bins over [0, 1]; the last
    /// bin is closed.
    std::vector<std::int64_t> histogram;

    std::string to_json() const;
    /// Whitespace-separated "bin_low bin_high count" rows for gnuplot.
    std::string histogram_text() const;
};

SparsityReport compute_sparsity(const DatasetIndex& ds, std::size_t workers = 1, std::size_t histogram_bins = 20);

/// JSON document holding both reports and the change in dataset ratio.
std::string compare_sparsity_json(const SparsityReport& before, const SparsityReport& after);

}  // namespace crow
