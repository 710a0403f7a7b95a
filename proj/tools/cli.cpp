#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "crow/dataset.hpp"
#include "crow/errors.hpp"
#include "crow/eval.hpp"
#include "crow/memory.hpp"
#include "crow/merge.hpp"
#include "crow/pipeline.hpp"
#include "crow/sparsity.hpp"
#include "crow/tile_layout.hpp"
#include "crow/worker_pool.hpp"

namespace crow::cli {

namespace {

using json = nlohmann::json;

// Flags given on the command line win over the config file, which wins over
// built-in defaults. Seeding the bound variables before parsing gives exactly
// that order.
class ConfigDefaults {
public:
    explicit ConfigDefaults(json values) : values_(std::move(values)) {}

    template <class T>
    void seed(T& var, const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return;
        try {
            var = it->get<T>();
        } catch (const json::exception&) {
            throw ValidationError("config key \"" + key + "\" has the wrong type");
        }
    }

private:
    json values_;
};

std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return std::nullopt;
}

json load_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config ") + path + ": " + e.what(), e.byte);
    }
    if (!j.is_object()) throw ValidationError("config " + path + " must be a flat JSON object");
    return j;
}

struct UsageError {
    std::string message;
};

void require_path(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError{std::string(flag) + " is required"};
}

struct GlobalOptions {
    std::string config_path;
    std::string log_level = "info";
    std::size_t workers = default_workers();
};

struct CrowFlags {
    std::int64_t tile_size = 512;
    double overlap = 0.25;
    double downscale = 1.0;
    double min_visibility = 0.1;
    bool full_frame = true;

    void seed(const ConfigDefaults& cfg) {
        cfg.seed(tile_size, "tile-size");
        cfg.seed(overlap, "overlap");
        cfg.seed(downscale, "downscale");
        cfg.seed(min_visibility, "min-visibility");
        cfg.seed(full_frame, "full-frame");
    }

    CrowConfig to_config() const {
        CrowConfig c;
        c.alpha = tile_size;
        c.beta = overlap;
        c.gamma = downscale;
        c.min_visibility = min_visibility;
        c.include_full_frame = full_frame;
        c.validate();
        return c;
    }
};

void add_layout_flags(CLI::App* sub, CrowFlags& f) {
    sub->add_option("--tile-size", f.tile_size, "Tile side length in pixels")->capture_default_str();
    sub->add_option("--overlap", f.overlap, "Minimum relative overlap of adjacent tiles")->capture_default_str();
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
    } else {
        write_text_file(path, text);
    }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto log = std::make_shared<spdlog::logger>("crow", sink);
    log->set_pattern("[%l] %v");

    GlobalOptions global;
    CrowFlags crow;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::string input, images, out_dir, format = "png";
    std::string compare, report_out, histogram_out;
    std::size_t bins = 20;
    std::string dets_path, layout_of, merged_out;
    double nms_iou = 0.5;
    std::string gt_path, eval_out;
    std::int64_t max_dets = 500;
    std::optional<double> single_iou;
    std::string net = "resnet18", input_shape = "224x224x3", precision = "fp32", memest_out;
    std::int64_t batch = 2;

    try {
        if (auto path = find_config_path(args)) {
            ConfigDefaults cfg(load_config(*path));
            crow.seed(cfg);
            cfg.seed(global.log_level, "log-level");
            cfg.seed(global.workers, "workers");
            cfg.seed(width, "width");
            cfg.seed(height, "height");
            cfg.seed(input, "input");
            cfg.seed(images, "images");
            cfg.seed(out_dir, "out");
            cfg.seed(format, "format");
            cfg.seed(compare, "compare");
            cfg.seed(histogram_out, "histogram");
            cfg.seed(bins, "bins");
            cfg.seed(dets_path, "dets");
            cfg.seed(layout_of, "layout-of");
            cfg.seed(nms_iou, "nms-iou");
            cfg.seed(gt_path, "gt");
            cfg.seed(max_dets, "max-dets");
            cfg.seed(net, "net");
            cfg.seed(input_shape, "input-shape");
            cfg.seed(batch, "batch");
            cfg.seed(precision, "precision");
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    }

    CLI::App app{"Cropping-window training-set tools for object detection", "crow"};
    app.set_version_flag("--version", std::string("crow ") + CROW_VERSION);
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", global.config_path, "Flat JSON file with flag defaults");
    app.add_option("--log-level", global.log_level, "trace, debug, info, warn, error, off")->capture_default_str();
    app.add_option("--workers", global.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    auto* layout_cmd = app.add_subcommand("layout", "Print the tile pattern of one image as JSON lines");
    layout_cmd->add_option("--width", width, "Image width in pixels");
    layout_cmd->add_option("--height", height, "Image height in pixels");
    add_layout_flags(layout_cmd, crow);

    auto* tile_cmd = app.add_subcommand("tile", "Build the tiled training set");
    tile_cmd->add_option("--input", input, "Input annotations (JSON)");
    tile_cmd->add_option("--images", images, "Directory holding the input images");
    tile_cmd->add_option("--out", out_dir, "Output directory");
    add_layout_flags(tile_cmd, crow);
    tile_cmd->add_option("--downscale", crow.downscale, "Full-frame down-scaling factor")->capture_default_str();
    tile_cmd->add_option("--min-visibility", crow.min_visibility, "Minimum kept fraction of a clipped box")
        ->capture_default_str();
    tile_cmd->add_option("--full-frame", crow.full_frame, "Append the down-scaled full frame (true/false)")
        ->capture_default_str();
    tile_cmd->add_option("--format", format, "Output raster format")->check(CLI::IsMember({"png", "jpg"}));

    auto* stats_cmd = app.add_subcommand("stats", "Foreground/background pixel ratio of a dataset");
    stats_cmd->add_option("--input", input, "Annotations (JSON)");
    stats_cmd->add_option("--compare", compare, "Second dataset to compare against, e.g. the tiled output");
    stats_cmd->add_option("--out", report_out, "Report path (stdout when omitted)");
    stats_cmd->add_option("--histogram", histogram_out, "Optional histogram text file");
    stats_cmd->add_option("--bins", bins, "Histogram bins")->capture_default_str()->check(CLI::PositiveNumber);

    auto* merge_cmd = app.add_subcommand("merge", "Merge per-tile detections into full frames with NMS");
    merge_cmd->add_option("--dets", dets_path, "Tile detections (JSON)");
    merge_cmd->add_option("--layout-of", layout_of, "Annotations file providing image sizes");
    add_layout_flags(merge_cmd, crow);
    merge_cmd->add_option("--nms-iou", nms_iou, "NMS IoU threshold")->capture_default_str();
    merge_cmd->add_option("--out", merged_out, "Merged detections path (stdout when omitted)");

    auto* eval_cmd = app.add_subcommand("eval", "COCO-style mean average precision");
    eval_cmd->add_option("--gt", gt_path, "Ground truth annotations (JSON)");
    eval_cmd->add_option("--dets", dets_path, "Detections (JSON)");
    eval_cmd->add_option("--max-dets", max_dets, "Detections per image and category")->capture_default_str();
    eval_cmd->add_option("--iou", single_iou, "Evaluate a single IoU threshold instead of 0.50:0.95");
    eval_cmd->add_option("--out", eval_out, "Also write the result to this path");

    auto* memest_cmd = app.add_subcommand("memest", "Parameter vs activation memory of a conv net");
    memest_cmd->add_option("--net", net, "Network JSON file, or the built-in \"resnet18\"")->capture_default_str();
    memest_cmd->add_option("--input", input_shape, "Input shape HxWxC")->capture_default_str();
    memest_cmd->add_option("--batch", batch, "Batch size")->capture_default_str();
    memest_cmd->add_option("--precision", precision, "fp32 or fp16")
        ->capture_default_str()
        ->check(CLI::IsMember({"fp32", "fp16"}));
    memest_cmd->add_option("--out", memest_out, "Also write the JSON report to this path");

    std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    log->set_level(spdlog::level::from_str(global.log_level));

    try {
        if (*layout_cmd) {
            if (width <= 0 || height <= 0) throw UsageError{"--width and --height are required and must be positive"};
            const TileLayout layout = compute_layout(width, height, crow.to_config());
            if (layout.rectangular) {
                log->warn("image is smaller than the tile size on one axis; tiles are {}x{}", layout.tiles[0].width,
                          layout.tiles[0].height);
            }
            for (const TileSpec& t : layout.tiles) {
                out << "{\"row\":" << t.row << ",\"col\":" << t.col << ",\"x\":" << t.origin_x
                    << ",\"y\":" << t.origin_y << ",\"w\":" << t.width << ",\"h\":" << t.height << "}\n";
            }
            return kOk;
        }

        if (*tile_cmd) {
            require_path(input, "--input");
            require_path(images, "--images");
            require_path(out_dir, "--out");
            PipelineOptions opts;
            opts.config = crow.to_config();
            opts.image_dir = images;
            opts.out_dir = out_dir;
            opts.workers = global.workers;
            opts.image_format = format;
            const DatasetIndex ds = load_dataset(input);
            log->info("loaded {} images, {} annotations", ds.images.size(), ds.annotations.size());
            const PipelineResult result = run_crow(ds, opts);
            const PipelineManifest& m = result.manifest;
            log->info("emitted {} tiles, discarded {}, {} full frames, {} annotations ({} cut) in {:.2f} s",
                      m.tiles_emitted, m.tiles_discarded, m.full_frames, m.total_annotations, m.cut_annotations,
                      m.wall_clock.count());
            for (const auto& f : m.failures) log->error("image {}: {}", f.image_id, f.error);
            return m.failures.empty() ? kOk : kPartialFailure;
        }

        if (*stats_cmd) {
            require_path(input, "--input");
            const SparsityReport before = compute_sparsity(load_dataset(input), global.workers, bins);
            std::string text;
            if (!compare.empty()) {
                const SparsityReport after = compute_sparsity(load_dataset(compare), global.workers, bins);
                text = compare_sparsity_json(before, after);
                log->info("foreground ratio {:.6f}% -> {:.6f}%", 100.0 * before.ratio, 100.0 * after.ratio);
            } else {
                text = before.to_json();
                log->info("foreground ratio {:.6f}%", 100.0 * before.ratio);
            }
            write_output(report_out, text, out);
            if (!histogram_out.empty()) write_text_file(histogram_out, before.histogram_text());
            return kOk;
        }

        if (*merge_cmd) {
            require_path(dets_path, "--dets");
            require_path(layout_of, "--layout-of");
            const auto dets = load_detections(dets_path);
            const DatasetIndex ds = load_dataset(layout_of);
            const auto merged = merge_tiled_detections(dets, ds, crow.to_config(), nms_iou, global.workers);
            log->info("merged {} detections into {}", dets.size(), merged.size());
            write_output(merged_out, dump_detections(merged), out);
            return kOk;
        }

        if (*eval_cmd) {
            require_path(gt_path, "--gt");
            require_path(dets_path, "--dets");
            EvalConfig cfg;
            cfg.max_dets = max_dets;
            if (single_iou) cfg.iou_thresholds = {*single_iou};
            const DatasetIndex gt = load_dataset(gt_path);
            const auto dets = load_detections(dets_path);
            const EvalResult r = evaluate(gt, dets, cfg, global.workers);
            const std::string text = r.to_json(gt);
            out << text;
            if (!eval_out.empty()) write_text_file(eval_out, text);
            return kOk;
        }

        if (*memest_cmd) {
            const auto layers = net == "resnet18" ? resnet18_chain() : load_network(net);
            const MemoryReport r =
                estimate(layers, parse_input_shape(input_shape), batch, precision == "fp16" ? 2 : 4);
            out << r.to_table();
            if (!memest_out.empty()) write_text_file(memest_out, r.to_json());
            return kOk;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.message << "\n\n" << app.help();
        return kUsage;
    } catch (const Error& e) {
        log->error("{}", e.what());
        return kValidationError;
    } catch (const std::exception& e) {
        log->error("{}", e.what());
        return kValidationError;
    }
    return kUsage;
}

}  // namespace crow::cli
