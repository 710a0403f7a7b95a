#include "crow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "crow/errors.hpp"
#include "crow/worker_pool.hpp"

namespace crow {

namespace fs = std::filesystem;

namespace {

// Rounding in x - origin can leave pos + len an ulp past limit; nudge pos
// down so bounds checks hold exactly.
void snap_inside(double& pos, double len, double limit) {
    while (pos + len > limit && pos > 0.0) {
        pos = std::nextafter(pos, 0.0);
    }
}

}  // namespace

std::optional<ClippedBox> clip_box(const BoundingBox& box, const TileSpec& tile) {
    const double tx0 = static_cast<double>(tile.origin_x);
    const double ty0 = static_cast<double>(tile.origin_y);
    const double tx1 = static_cast<double>(tile.right());
    const double ty1 = static_cast<double>(tile.bottom());

    // Full containment keeps w/h bit-exact; x1 - x0 would not for fractional boxes.
    if (box.x >= tx0 && box.y >= ty0 && box.right() <= tx1 && box.bottom() <= ty1) {
        ClippedBox out{{box.x - tx0, box.y - ty0, box.w, box.h}, 1.0};
        snap_inside(out.box.x, out.box.w, static_cast<double>(tile.width));
        snap_inside(out.box.y, out.box.h, static_cast<double>(tile.height));
        return out;
    }

    const double x0 = std::max(box.x, tx0);
    const double y0 = std::max(box.y, ty0);
    const double x1 = std::min(box.right(), tx1);
    const double y1 = std::min(box.bottom(), ty1);
    if (x1 <= x0 || y1 <= y0) {
        return std::nullopt;
    }
    const double w = x1 - x0;
    const double h = y1 - y0;
    const double visibility = std::min(1.0, (w * h) / box.area());
    ClippedBox out{{x0 - tx0, y0 - ty0, w, h}, visibility};
    snap_inside(out.box.x, out.box.w, static_cast<double>(tile.width));
    snap_inside(out.box.y, out.box.h, static_cast<double>(tile.height));
    return out;
}

std::string tile_file_name(std::int64_t image_id, const TileSpec& tile, const std::string& ext) {
    return std::to_string(image_id) + "_r" + std::to_string(tile.row) + "_c" + std::to_string(tile.col) + "." + ext;
}

std::string full_frame_file_name(std::int64_t image_id, const std::string& ext) {
    return std::to_string(image_id) + "_full." + ext;
}

std::vector<TileSample> divide_image(const ImageRecord& image, const cv::Mat& raster,
                                     std::span<const AnnotationRecord> annotations, const CrowConfig& cfg,
                                     const std::string& ext, ImageTileCounts* counts) {
    if (raster.cols != image.width || raster.rows != image.height) {
        throw ValidationError("image " + std::to_string(image.id) + ": raster is " + std::to_string(raster.cols) + "x" +
                              std::to_string(raster.rows) + ", record says " + std::to_string(image.width) + "x" +
                              std::to_string(image.height));
    }
    const TileLayout layout = compute_layout(image.width, image.height, cfg);

    std::vector<TileSample> samples;
    for (const TileSpec& tile : layout.tiles) {
        std::vector<AnnotationRecord> kept;
        for (const AnnotationRecord& ann : annotations) {
            auto clipped = clip_box(ann.bbox, tile);
            if (!clipped || clipped->visibility < cfg.min_visibility) {
                continue;
            }
            AnnotationRecord out = ann;
            out.bbox = clipped->box;
            out.area = out.bbox.area();
            out.cut = ann.cut || clipped->visibility < 1.0;
            kept.push_back(out);
        }
        if (kept.empty()) {
            continue;
        }
        TileSample sample;
        sample.source_image_id = image.id;
        sample.tile = tile;
        sample.out_file_name = tile_file_name(image.id, tile, ext);
        sample.annotations = std::move(kept);
        sample.raster = raster(cv::Rect(static_cast<int>(tile.origin_x), static_cast<int>(tile.origin_y),
                                        static_cast<int>(tile.width), static_cast<int>(tile.height)));
        samples.push_back(std::move(sample));
    }

    if (counts) {
        counts->image_id = image.id;
        counts->layout_tiles = static_cast<std::int64_t>(layout.tiles.size());
        counts->emitted = static_cast<std::int64_t>(samples.size());
        counts->discarded = counts->layout_tiles - counts->emitted;
    }
    return samples;
}

double gamma_for_max_side(std::int64_t width, std::int64_t height, std::int64_t max_side) {
    const std::int64_t longest = std::max(width, height);
    if (max_side <= 0 || longest <= max_side) {
        return 1.0;
    }
    return static_cast<double>(max_side) / static_cast<double>(longest);
}

DownscaleResult downscale_image(const ImageRecord& image, const cv::Mat& raster,
                                std::span<const AnnotationRecord> annotations, double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw ArgumentError("downscale factor must be in (0, 1], got " + std::to_string(gamma));
    }

    DownscaleResult out;
    out.annotations.assign(annotations.begin(), annotations.end());
    if (gamma == 1.0) {
        out.raster = raster;
        out.width = image.width;
        out.height = image.height;
        return out;
    }

    out.width = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(static_cast<double>(image.width) * gamma + 0.5)));
    out.height = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(static_cast<double>(image.height) * gamma + 0.5)));
    if (!raster.empty()) {
        cv::resize(raster, out.raster, cv::Size(static_cast<int>(out.width), static_cast<int>(out.height)), 0, 0,
                   cv::INTER_LINEAR);
    }

    const double max_x = static_cast<double>(out.width);
    const double max_y = static_cast<double>(out.height);
    // Scales one axis and keeps the interval inside [0, limit]; returns true
    // when the side had to be raised to one pixel.
    auto fit_axis = [](double& pos, double& len, double limit) {
        bool clamped = false;
        if (len < 1.0) {
            len = std::min(1.0, limit);
            clamped = true;
        }
        if (len > limit) len = limit;
        if (pos + len > limit) {
            if (limit - pos >= 1.0 && !clamped) {
                len = limit - pos;
            } else {
                pos = limit - len;
            }
        }
        if (pos < 0.0) pos = 0.0;
        snap_inside(pos, len, limit);
        return clamped;
    };

    for (AnnotationRecord& ann : out.annotations) {
        BoundingBox& b = ann.bbox;
        b.x *= gamma;
        b.y *= gamma;
        b.w *= gamma;
        b.h *= gamma;
        const bool cx = fit_axis(b.x, b.w, max_x);
        const bool cy = fit_axis(b.y, b.h, max_y);
        if (cx || cy) ++out.clamped_boxes;
        ann.area = b.area();
    }
    return out;
}

std::string PipelineManifest::to_json() const {
    using ordered_json = nlohmann::ordered_json;
    ordered_json root;
    ordered_json& c = root["config"];
    c["tile_size"] = config.alpha;
    c["overlap"] = config.beta;
    c["downscale"] = config.gamma;
    c["min_visibility"] = config.min_visibility;
    c["full_frame"] = config.include_full_frame;

    ordered_json& t = root["totals"];
    t["images_in"] = static_cast<std::int64_t>(images.size() + failures.size());
    t["images_failed"] = static_cast<std::int64_t>(failures.size());
    t["tiles_emitted"] = tiles_emitted;
    t["tiles_discarded"] = tiles_discarded;
    t["full_frames"] = full_frames;
    t["samples"] = total_samples;
    t["annotations"] = total_annotations;
    t["cut_annotations"] = cut_annotations;
    t["clamped_boxes"] = clamped_boxes;

    ordered_json& per_image = root["images"] = ordered_json::array();
    for (const auto& img : images) {
        ordered_json j;
        j["image_id"] = img.image_id;
        j["layout_tiles"] = img.layout_tiles;
        j["emitted"] = img.emitted;
        j["discarded"] = img.discarded;
        per_image.push_back(std::move(j));
    }
    ordered_json& failed = root["failures"] = ordered_json::array();
    for (const auto& f : failures) {
        ordered_json j;
        j["image_id"] = f.image_id;
        j["error"] = f.error;
        failed.push_back(std::move(j));
    }
    return root.dump(1) + "\n";
}

namespace {

struct EmittedImage {
    std::string file_name;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::vector<AnnotationRecord> annotations;
};

struct ImageOutcome {
    ImageTileCounts counts;
    std::vector<EmittedImage> tiles;
    std::optional<EmittedImage> full_frame;
    std::int64_t clamped_boxes = 0;
    std::optional<std::string> error;
};

void write_raster(const fs::path& path, const cv::Mat& raster, const std::string& ext) {
    std::vector<int> params;
    if (ext == "png") {
        params = {cv::IMWRITE_PNG_COMPRESSION, 3};
    } else {
        params = {cv::IMWRITE_JPEG_QUALITY, 95};
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), raster, params);
    } catch (const cv::Exception& e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) {
        throw IoError("cannot write " + path.string());
    }
}

ImageOutcome process_image(const ImageRecord& image, std::span<const AnnotationRecord> annotations,
                           const PipelineOptions& opts, const fs::path& images_out) {
    ImageOutcome outcome;
    outcome.counts.image_id = image.id;
    try {
        const fs::path src = opts.image_dir / image.file_name;
        cv::Mat raster;
        try {
            raster = cv::imread(src.string(), cv::IMREAD_UNCHANGED);
        } catch (const cv::Exception& e) {
            throw IoError("cannot decode " + src.string() + ": " + e.what());
        }
        if (raster.empty()) {
            throw IoError("cannot decode " + src.string());
        }

        auto samples = divide_image(image, raster, annotations, opts.config, opts.image_format, &outcome.counts);
        for (auto& sample : samples) {
            write_raster(images_out / sample.out_file_name, sample.raster, opts.image_format);
            outcome.tiles.push_back({sample.out_file_name, sample.tile.width, sample.tile.height,
                                     std::move(sample.annotations)});
        }

        if (opts.config.include_full_frame) {
            auto scaled = downscale_image(image, raster, annotations, opts.config.gamma);
            const std::string name = full_frame_file_name(image.id, opts.image_format);
            write_raster(images_out / name, scaled.raster, opts.image_format);
            outcome.clamped_boxes = scaled.clamped_boxes;
            outcome.full_frame = EmittedImage{name, scaled.width, scaled.height, std::move(scaled.annotations)};
        }
    } catch (const Error& e) {
        outcome.error = e.what();
    } catch (const cv::Exception& e) {
        outcome.error = e.what();
    }
    return outcome;
}

}  // namespace

PipelineResult run_crow(const DatasetIndex& input, const PipelineOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    opts.config.validate();
    if (opts.image_format != "png" && opts.image_format != "jpg") {
        throw ArgumentError("image format must be png or jpg, got " + opts.image_format);
    }
    validate(input);

    const fs::path images_out = opts.out_dir / "images";
    std::error_code ec;
    fs::create_directories(images_out, ec);
    if (ec) {
        throw IoError("cannot create " + images_out.string() + ": " + ec.message());
    }

    DatasetIndex sorted = input;
    sort_by_id(sorted);

    std::map<std::int64_t, std::vector<AnnotationRecord>> by_image;
    for (const auto& ann : sorted.annotations) by_image[ann.image_id].push_back(ann);

    std::vector<ImageOutcome> outcomes(sorted.images.size());
    parallel_for(sorted.images.size(), opts.workers, [&](std::size_t i) {
        const ImageRecord& image = sorted.images[i];
        auto it = by_image.find(image.id);
        std::span<const AnnotationRecord> anns;
        if (it != by_image.end()) anns = it->second;
        outcomes[i] = process_image(image, anns, opts, images_out);
    });

    PipelineResult result;
    PipelineManifest& m = result.manifest;
    DatasetIndex& out = result.dataset;
    m.config = opts.config;
    out.categories = sorted.categories;

    std::int64_t next_image_id = 1;
    std::int64_t next_ann_id = 1;
    auto emit = [&](const EmittedImage& e) {
        const std::int64_t image_id = next_image_id++;
        out.images.push_back({image_id, e.file_name, e.width, e.height});
        for (AnnotationRecord ann : e.annotations) {
            ann.id = next_ann_id++;
            ann.image_id = image_id;
            if (ann.cut) ++m.cut_annotations;
            out.annotations.push_back(ann);
        }
    };

    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const ImageOutcome& o = outcomes[i];
        if (o.error) {
            m.failures.push_back({sorted.images[i].id, *o.error});
            continue;
        }
        m.images.push_back(o.counts);
        m.tiles_emitted += o.counts.emitted;
        m.tiles_discarded += o.counts.discarded;
        for (const auto& tile : o.tiles) emit(tile);
    }
    for (const auto& o : outcomes) {
        if (o.error || !o.full_frame) continue;
        emit(*o.full_frame);
        ++m.full_frames;
        m.clamped_boxes += o.clamped_boxes;
    }
    m.total_samples = static_cast<std::int64_t>(out.images.size());
    m.total_annotations = static_cast<std::int64_t>(out.annotations.size());

    save_dataset(out, opts.out_dir / "annotations.json");
    write_text_file(opts.out_dir / "manifest.json", m.to_json());
    m.wall_clock = std::chrono::steady_clock::now() - start;
    return result;
}

}  // namespace crow
