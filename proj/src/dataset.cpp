#include "crow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "crow/errors.hpp"

namespace crow {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const json& require_field(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ValidationError(where + ": missing field \"" + key + "\"");
    }
    return *it;
}

std::int64_t require_int(const json& obj, const char* key, const std::string& where) {
    const json& v = require_field(obj, key, where);
    if (!v.is_number_integer()) {
        throw ValidationError(where + ": field \"" + key + "\" must be an integer");
    }
    return v.get<std::int64_t>();
}

double require_number(const json& v, const std::string& what) {
    if (!v.is_number()) {
        throw ValidationError(what + " must be a number");
    }
    return v.get<double>();
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    const json& v = require_field(obj, key, where);
    if (!v.is_string()) {
        throw ValidationError(where + ": field \"" + key + "\" must be a string");
    }
    return v.get<std::string>();
}

const json& require_array(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_array()) {
        throw ValidationError(std::string("top-level \"") + key + "\" must be an array");
    }
    return *it;
}

ImageRecord parse_image(const json& j, std::size_t pos) {
    const std::string where = "images[" + std::to_string(pos) + "]";
    if (!j.is_object()) throw ValidationError(where + " must be an object");
    ImageRecord img;
    img.id = require_int(j, "id", where);
    img.file_name = require_string(j, "file_name", where);
    img.width = require_int(j, "width", where);
    img.height = require_int(j, "height", where);
    return img;
}

AnnotationRecord parse_annotation(const json& j, std::size_t pos) {
    std::string where = "annotations[" + std::to_string(pos) + "]";
    if (!j.is_object()) throw ValidationError(where + " must be an object");
    AnnotationRecord ann;
    ann.id = require_int(j, "id", where);
    where = "annotation " + std::to_string(ann.id);
    ann.image_id = require_int(j, "image_id", where);
    ann.category_id = require_int(j, "category_id", where);

    const json& bbox = require_field(j, "bbox", where);
    if (!bbox.is_array() || bbox.size() != 4) {
        throw ValidationError(where + ": bbox must be an array of 4 numbers");
    }
    ann.bbox = {require_number(bbox[0], where + ": bbox[0]"),
                require_number(bbox[1], where + ": bbox[1]"),
                require_number(bbox[2], where + ": bbox[2]"),
                require_number(bbox[3], where + ": bbox[3]")};

    if (auto it = j.find("area"); it != j.end()) {
        ann.area = require_number(*it, where + ": area");
    } else {
        ann.area = ann.bbox.area();
    }

    if (auto it = j.find("iscrowd"); it != j.end()) {
        if (!it->is_number_integer() || (it->get<std::int64_t>() != 0 && it->get<std::int64_t>() != 1)) {
            throw ValidationError(where + ": iscrowd must be 0 or 1");
        }
        ann.iscrowd = it->get<std::int64_t>() == 1;
    }
    if (auto it = j.find("cut"); it != j.end()) {
        if (!it->is_boolean()) throw ValidationError(where + ": cut must be a boolean");
        ann.cut = it->get<bool>();
    }
    return ann;
}

CategoryRecord parse_category(const json& j, std::size_t pos) {
    const std::string where = "categories[" + std::to_string(pos) + "]";
    if (!j.is_object()) throw ValidationError(where + " must be an object");
    return {require_int(j, "id", where), require_string(j, "name", where)};
}

}  // namespace

void sort_by_id(DatasetIndex& ds) {
    auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
    std::stable_sort(ds.images.begin(), ds.images.end(), by_id);
    std::stable_sort(ds.annotations.begin(), ds.annotations.end(), by_id);
    std::stable_sort(ds.categories.begin(), ds.categories.end(), by_id);
}

void validate(const DatasetIndex& ds) {
    std::unordered_map<std::int64_t, const ImageRecord*> images;
    for (const auto& img : ds.images) {
        if (!images.emplace(img.id, &img).second) {
            throw ValidationError("duplicate image id " + std::to_string(img.id));
        }
        if (img.width <= 0 || img.height <= 0) {
            throw ValidationError("image " + std::to_string(img.id) + ": width and height must be positive");
        }
    }

    std::unordered_set<std::int64_t> categories;
    for (const auto& cat : ds.categories) {
        if (!categories.insert(cat.id).second) {
            throw ValidationError("duplicate category id " + std::to_string(cat.id));
        }
        if (cat.name.empty()) {
            throw ValidationError("category " + std::to_string(cat.id) + ": empty name");
        }
    }

    std::unordered_set<std::int64_t> ann_ids;
    for (const auto& ann : ds.annotations) {
        const std::string where = "annotation " + std::to_string(ann.id);
        if (!ann_ids.insert(ann.id).second) {
            throw ValidationError("duplicate annotation id " + std::to_string(ann.id));
        }
        auto img = images.find(ann.image_id);
        if (img == images.end()) {
            throw ReferenceError(where + ": image_id " + std::to_string(ann.image_id) + " does not exist");
        }
        if (!categories.contains(ann.category_id)) {
            throw ReferenceError(where + ": category_id " + std::to_string(ann.category_id) + " does not exist");
        }
        const BoundingBox& b = ann.bbox;
        if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.w) || !std::isfinite(b.h)) {
            throw ValidationError(where + ": non-finite bbox");
        }
        if (b.w <= 0.0 || b.h <= 0.0) {
            throw ValidationError(where + ": bbox width and height must be positive");
        }
        if (b.x < 0.0 || b.y < 0.0 || b.right() > static_cast<double>(img->second->width) ||
            b.bottom() > static_cast<double>(img->second->height)) {
            throw ValidationError(where + ": bbox exceeds the bounds of image " + std::to_string(ann.image_id));
        }
        if (!(ann.area > 0.0) || !std::isfinite(ann.area)) {
            throw ValidationError(where + ": area must be positive");
        }
    }
}

DatasetIndex parse_dataset(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    if (!root.is_object()) {
        throw ValidationError("dataset root must be a JSON object");
    }

    DatasetIndex ds;
    const json& images = require_array(root, "images");
    const json& annotations = require_array(root, "annotations");
    const json& categories = require_array(root, "categories");
    ds.images.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) ds.images.push_back(parse_image(images[i], i));
    ds.annotations.reserve(annotations.size());
    for (std::size_t i = 0; i < annotations.size(); ++i) ds.annotations.push_back(parse_annotation(annotations[i], i));
    ds.categories.reserve(categories.size());
    for (std::size_t i = 0; i < categories.size(); ++i) ds.categories.push_back(parse_category(categories[i], i));

    sort_by_id(ds);
    validate(ds);
    return ds;
}

std::string dump_dataset(const DatasetIndex& ds) {
    ordered_json root = ordered_json::object();
    ordered_json& images = root["images"] = ordered_json::array();
    for (const auto& img : ds.images) {
        ordered_json j;
        j["id"] = img.id;
        j["file_name"] = img.file_name;
        j["width"] = img.width;
        j["height"] = img.height;
        images.push_back(std::move(j));
    }
    ordered_json& annotations = root["annotations"] = ordered_json::array();
    for (const auto& ann : ds.annotations) {
        ordered_json j;
        j["id"] = ann.id;
        j["image_id"] = ann.image_id;
        j["bbox"] = {ann.bbox.x, ann.bbox.y, ann.bbox.w, ann.bbox.h};
        j["category_id"] = ann.category_id;
        j["area"] = ann.area;
        j["iscrowd"] = ann.iscrowd ? 1 : 0;
        if (ann.cut) j["cut"] = true;
        annotations.push_back(std::move(j));
    }
    ordered_json& categories = root["categories"] = ordered_json::array();
    for (const auto& cat : ds.categories) {
        ordered_json j;
        j["id"] = cat.id;
        j["name"] = cat.name;
        categories.push_back(std::move(j));
    }
    return root.dump(1) + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw IoError("read failed: " + path.string());
    }
    return std::move(buf).str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

DatasetIndex load_dataset(const std::filesystem::path& path) {
    return parse_dataset(read_text_file(path));
}

void save_dataset(const DatasetIndex& ds, const std::filesystem::path& path) {
    validate(ds);
    DatasetIndex sorted = ds;
    sort_by_id(sorted);
    write_text_file(path, dump_dataset(sorted));
}

}  // namespace crow
