#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "crow/dataset.hpp"
#include "crow/errors.hpp"
#include "crow/eval.hpp"
#include "crow/memory.hpp"
#include "crow/merge.hpp"
#include "crow/pipeline.hpp"
#include "crow/sparsity.hpp"
#include "crow/tile_layout.hpp"

namespace py = pybind11;
using namespace crow;

namespace {

BoundingBox box_from(const py::sequence& s) {
    if (py::len(s) != 4) throw py::value_error("bbox must have 4 numbers [x, y, w, h]");
    return {s[0].cast<double>(), s[1].cast<double>(), s[2].cast<double>(), s[3].cast<double>()};
}

py::tuple box_to(const BoundingBox& b) { return py::make_tuple(b.x, b.y, b.w, b.h); }

}  // namespace

PYBIND11_MODULE(_crow, m) {
    m.doc() = "Cropping-window tiling, sparsity statistics, NMS merging, mAP and memory estimation";
    m.attr("__version__") = CROW_VERSION;

    auto base = py::register_exception<Error>(m, "CrowError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ReferenceError>(m, "ReferenceError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::class_<BoundingBox>(m, "BoundingBox")
        .def(py::init<double, double, double, double>(), py::arg("x"), py::arg("y"), py::arg("w"), py::arg("h"))
        .def(py::init(&box_from), py::arg("xywh"))
        .def_readwrite("x", &BoundingBox::x)
        .def_readwrite("y", &BoundingBox::y)
        .def_readwrite("w", &BoundingBox::w)
        .def_readwrite("h", &BoundingBox::h)
        .def("area", &BoundingBox::area)
        .def("to_tuple", &box_to)
        .def(py::self == py::self)
        .def("__repr__", [](const BoundingBox& b) {
            return "BoundingBox(" + std::to_string(b.x) + ", " + std::to_string(b.y) + ", " + std::to_string(b.w) +
                   ", " + std::to_string(b.h) + ")";
        });
    py::implicitly_convertible<py::tuple, BoundingBox>();
    py::implicitly_convertible<py::list, BoundingBox>();

    py::class_<ImageRecord>(m, "ImageRecord")
        .def(py::init<>())
        .def_readwrite("id", &ImageRecord::id)
        .def_readwrite("file_name", &ImageRecord::file_name)
        .def_readwrite("width", &ImageRecord::width)
        .def_readwrite("height", &ImageRecord::height);
    py::class_<AnnotationRecord>(m, "AnnotationRecord")
        .def(py::init<>())
        .def_readwrite("id", &AnnotationRecord::id)
        .def_readwrite("image_id", &AnnotationRecord::image_id)
        .def_readwrite("bbox", &AnnotationRecord::bbox)
        .def_readwrite("category_id", &AnnotationRecord::category_id)
        .def_readwrite("area", &AnnotationRecord::area)
        .def_readwrite("iscrowd", &AnnotationRecord::iscrowd)
        .def_readwrite("cut", &AnnotationRecord::cut);
    py::class_<CategoryRecord>(m, "CategoryRecord")
        .def(py::init<>())
        .def_readwrite("id", &CategoryRecord::id)
        .def_readwrite("name", &CategoryRecord::name);
    py::class_<DatasetIndex>(m, "DatasetIndex")
        .def(py::init<>())
        .def_readwrite("images", &DatasetIndex::images)
        .def_readwrite("annotations", &DatasetIndex::annotations)
        .def_readwrite("categories", &DatasetIndex::categories)
        .def(py::self == py::self)
        .def("to_json", &dump_dataset)
        .def_static("from_json", [](const std::string& text) { return parse_dataset(text); });
    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));

    py::class_<CrowConfig>(m, "CrowConfig")
        .def(py::init([](std::int64_t alpha, double beta, double gamma, double min_visibility, bool full_frame) {
                 CrowConfig c{alpha, beta, gamma, min_visibility, full_frame};
                 c.validate();
                 return c;
             }),
             py::arg("alpha") = 512, py::arg("beta") = 0.25, py::arg("gamma") = 1.0, py::arg("min_visibility") = 0.1,
             py::arg("include_full_frame") = true)
        .def_readwrite("alpha", &CrowConfig::alpha)
        .def_readwrite("beta", &CrowConfig::beta)
        .def_readwrite("gamma", &CrowConfig::gamma)
        .def_readwrite("min_visibility", &CrowConfig::min_visibility)
        .def_readwrite("include_full_frame", &CrowConfig::include_full_frame);

    py::class_<TileSpec>(m, "TileSpec")
        .def_readonly("origin_x", &TileSpec::origin_x)
        .def_readonly("origin_y", &TileSpec::origin_y)
        .def_readonly("width", &TileSpec::width)
        .def_readonly("height", &TileSpec::height)
        .def_readonly("row", &TileSpec::row)
        .def_readonly("col", &TileSpec::col)
        .def("__repr__", [](const TileSpec& t) {
            return "TileSpec(row=" + std::to_string(t.row) + ", col=" + std::to_string(t.col) +
                   ", x=" + std::to_string(t.origin_x) + ", y=" + std::to_string(t.origin_y) +
                   ", w=" + std::to_string(t.width) + ", h=" + std::to_string(t.height) + ")";
        });
    py::class_<TileLayout>(m, "TileLayout")
        .def_readonly("image_width", &TileLayout::image_width)
        .def_readonly("image_height", &TileLayout::image_height)
        .def_readonly("tiles", &TileLayout::tiles)
        .def_readonly("rows", &TileLayout::rows)
        .def_readonly("cols", &TileLayout::cols)
        .def_readonly("stride_x", &TileLayout::stride_x)
        .def_readonly("stride_y", &TileLayout::stride_y)
        .def_readonly("rectangular", &TileLayout::rectangular);
    m.def("compute_layout", &compute_layout, py::arg("width"), py::arg("height"), py::arg("config") = CrowConfig{});
    m.def("uncut_guarantee_bound", &uncut_guarantee_bound, py::arg("config") = CrowConfig{});

    m.def(
        "clip_box",
        [](const BoundingBox& box, const TileSpec& tile) -> py::object {
            auto c = clip_box(box, tile);
            if (!c) return py::none();
            return py::make_tuple(c->box, c->visibility);
        },
        py::arg("box"), py::arg("tile"), "Tile-relative clipped box and its visibility, or None");

    m.def(
        "union_area", [](const std::vector<BoundingBox>& boxes) { return union_area(boxes); }, py::arg("boxes"));
    m.def("iou", &iou, py::arg("a"), py::arg("b"));

    py::class_<DetectionRecord>(m, "Detection")
        .def(py::init([](std::int64_t image_id, const BoundingBox& bbox, std::int64_t category_id, double score,
                         std::optional<std::pair<std::int64_t, std::int64_t>> tile) {
                 DetectionRecord d;
                 d.image_id = image_id;
                 d.bbox = bbox;
                 d.category_id = category_id;
                 d.score = score;
                 if (tile) d.tile = TileIndex{tile->first, tile->second};
                 return d;
             }),
             py::arg("image_id"), py::arg("bbox"), py::arg("category_id"), py::arg("score"),
             py::arg("tile") = py::none())
        .def_readwrite("image_id", &DetectionRecord::image_id)
        .def_readwrite("bbox", &DetectionRecord::bbox)
        .def_readwrite("category_id", &DetectionRecord::category_id)
        .def_readwrite("score", &DetectionRecord::score)
        .def_property_readonly("tile",
                               [](const DetectionRecord& d) -> py::object {
                                   if (!d.tile) return py::none();
                                   return py::make_tuple(d.tile->row, d.tile->col);
                               })
        .def(py::self == py::self);
    m.def(
        "nms", [](const std::vector<DetectionRecord>& d, double thr) { return nms(d, thr); }, py::arg("detections"),
        py::arg("iou_threshold") = 0.5);
    m.def(
        "merge_tiled_detections",
        [](const std::vector<DetectionRecord>& d, const DatasetIndex& images, const CrowConfig& cfg, double thr,
           std::size_t workers) { return merge_tiled_detections(d, images, cfg, thr, workers); },
        py::arg("detections"), py::arg("images"), py::arg("config") = CrowConfig{}, py::arg("iou_threshold") = 0.5,
        py::arg("workers") = 1);
    m.def("load_detections", &load_detections, py::arg("path"));

    py::class_<EvalResult>(m, "EvalResult")
        .def_readonly("map", &EvalResult::map)
        .def_readonly("map50", &EvalResult::map50)
        .def_readonly("thresholds", &EvalResult::thresholds)
        .def_readonly("per_threshold", &EvalResult::per_threshold)
        .def_readonly("per_category", &EvalResult::per_category);
    m.def(
        "evaluate",
        [](const DatasetIndex& gt, const std::vector<DetectionRecord>& dets,
           std::optional<std::vector<double>> thresholds, std::int64_t max_dets, std::size_t workers) {
            EvalConfig cfg;
            if (thresholds) cfg.iou_thresholds = *thresholds;
            cfg.max_dets = max_dets;
            py::gil_scoped_release release;
            return evaluate(gt, dets, cfg, workers);
        },
        py::arg("ground_truth"), py::arg("detections"), py::arg("iou_thresholds") = py::none(),
        py::arg("max_dets") = 500, py::arg("workers") = 1);

    py::class_<SparsityReport>(m, "SparsityReport")
        .def_readonly("total_foreground", &SparsityReport::total_foreground)
        .def_readonly("total_pixels", &SparsityReport::total_pixels)
        .def_readonly("ratio", &SparsityReport::ratio)
        .def_readonly("histogram", &SparsityReport::histogram)
        .def("to_json", &SparsityReport::to_json);
    m.def("compute_sparsity", &compute_sparsity, py::arg("dataset"), py::arg("workers") = 1, py::arg("bins") = 20);

    py::enum_<LayerKind>(m, "LayerKind")
        .value("conv", LayerKind::conv)
        .value("separable_conv", LayerKind::separable_conv)
        .value("pool", LayerKind::pool)
        .value("fully_connected", LayerKind::fully_connected)
        .value("residual_add", LayerKind::residual_add);
    py::class_<LayerSpec>(m, "LayerSpec")
        .def(py::init([](LayerKind kind, std::int64_t in_c, std::int64_t out_c, std::int64_t k, std::int64_t s,
                         std::int64_t p, bool global, std::string name) {
                 return LayerSpec{kind, in_c, out_c, k, s, p, global, std::move(name)};
             }),
             py::arg("kind"), py::arg("in_channels"), py::arg("out_channels"), py::arg("kernel") = 1,
             py::arg("stride") = 1, py::arg("padding") = 0, py::arg("global_pool") = false, py::arg("name") = "")
        .def_readwrite("kind", &LayerSpec::kind)
        .def_readwrite("in_channels", &LayerSpec::in_channels)
        .def_readwrite("out_channels", &LayerSpec::out_channels)
        .def_readwrite("kernel", &LayerSpec::kernel)
        .def_readwrite("stride", &LayerSpec::stride)
        .def_readwrite("padding", &LayerSpec::padding)
        .def_readwrite("name", &LayerSpec::name);
    py::class_<MemoryReport>(m, "MemoryReport")
        .def_readonly("batch", &MemoryReport::batch)
        .def_readonly("bytes_per_element", &MemoryReport::bytes_per_element)
        .def_readonly("total_parameters", &MemoryReport::total_parameters)
        .def_readonly("total_parameter_bytes", &MemoryReport::total_parameter_bytes)
        .def_readonly("total_activation_elements", &MemoryReport::total_activation_elements)
        .def_readonly("total_activation_bytes", &MemoryReport::total_activation_bytes)
        .def("to_json", &MemoryReport::to_json)
        .def("to_table", &MemoryReport::to_table);
    m.def(
        "estimate_memory",
        [](const std::vector<LayerSpec>& layers, std::tuple<std::int64_t, std::int64_t, std::int64_t> input,
           std::int64_t batch, std::int64_t bytes_per_element) {
            auto [h, w, c] = input;
            return estimate(layers, FeatureShape{h, w, c}, batch, bytes_per_element);
        },
        py::arg("layers"), py::arg("input"), py::arg("batch") = 1, py::arg("bytes_per_element") = 4);
    m.def("resnet18_chain", &resnet18_chain, py::arg("num_classes") = 1000);

    py::class_<PipelineManifest>(m, "PipelineManifest")
        .def_readonly("tiles_emitted", &PipelineManifest::tiles_emitted)
        .def_readonly("tiles_discarded", &PipelineManifest::tiles_discarded)
        .def_readonly("full_frames", &PipelineManifest::full_frames)
        .def_readonly("total_samples", &PipelineManifest::total_samples)
        .def_readonly("total_annotations", &PipelineManifest::total_annotations)
        .def_readonly("cut_annotations", &PipelineManifest::cut_annotations)
        .def_property_readonly("failures",
                               [](const PipelineManifest& mf) {
                                   std::vector<std::pair<std::int64_t, std::string>> out;
                                   for (const auto& f : mf.failures) out.emplace_back(f.image_id, f.error);
                                   return out;
                               })
        .def("to_json", &PipelineManifest::to_json);
    m.def(
        "run_crow",
        [](const DatasetIndex& input, const std::filesystem::path& image_dir, const std::filesystem::path& out_dir,
           const CrowConfig& cfg, std::size_t workers, const std::string& image_format) {
            PipelineOptions opts{cfg, image_dir, out_dir, workers, image_format};
            py::gil_scoped_release release;
            PipelineResult r = run_crow(input, opts);
            return std::make_pair(std::move(r.dataset), std::move(r.manifest));
        },
        py::arg("dataset"), py::arg("image_dir"), py::arg("out_dir"), py::arg("config") = CrowConfig{},
        py::arg("workers") = 1, py::arg("image_format") = "png",
        "Tiles every image, writes images/, annotations.json and manifest.json; returns (dataset, manifest)");
}
