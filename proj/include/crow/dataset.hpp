#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace crow {

/// Axis-aligned box, top-left origin, COCO `bbox` convention.
struct BoundingBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double right() const { return x + w; }
    double bottom() const { return y + h; }
    double area() const { return w * h; }

    bool operator==(const BoundingBox&) const = default;
};

struct ImageRecord {
    std::int64_t id = 0;
    std::string file_name;
    std::int64_t width = 0;
    std::int64_t height = 0;

    bool operator==(const ImageRecord&) const = default;
};

struct AnnotationRecord {
    std::int64_t id = 0;
    std::int64_t image_id = 0;
    BoundingBox bbox;
    std::int64_t category_id = 0;
    double area = 0.0;
    bool iscrowd = false;
    // Set when the box was clipped by a tile boundary.
    bool cut = false;

    bool operator==(const AnnotationRecord&) const = default;
};

struct CategoryRecord {
    std::int64_t id = 0;
    std::string name;

    bool operator==(const CategoryRecord&) const = default;
};

/// A COCO-style detection dataset. Images and annotations are kept sorted by
/// id; every annotation resolves to an image and a category.
struct DatasetIndex {
    std::vector<ImageRecord> images;
    std::vector<AnnotationRecord> annotations;
    std::vector<CategoryRecord> categories;

    bool operator==(const DatasetIndex&) const = default;
};

/// Sorts images, annotations and categories by id.
void sort_by_id(DatasetIndex& ds);

/// Throws ValidationError or ReferenceError on the first violated invariant.
void validate(const DatasetIndex& ds);

/// Strict parse of the JSON dataset schema. Unknown fields are ignored.
DatasetIndex parse_dataset(std::string_view json_text);

/// Canonical serialization: fixed key order, shortest round-trip floats.
std::string dump_dataset(const DatasetIndex& ds);

DatasetIndex load_dataset(const std::filesystem::path& path);
void save_dataset(const DatasetIndex& ds, const std::filesystem::path& path);

/// Reads a whole file; throws IoError.
std::string read_text_file(const std::filesystem::path& path);
/// Writes a whole file; throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace crow
