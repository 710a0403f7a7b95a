#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crow {

enum class LayerKind { conv, separable_conv, pool, fully_connected, residual_add };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// One layer of a sequential network description.
///
/// For `pool`, `global` replaces kernel/stride/padding by a window covering
/// the whole feature map. `fully_connected` flattens its input, so
/// `in_channels` must equal channels * height * width of the incoming map.
/// `residual_add` adds the skip branch elementwise and keeps the shape.
struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t kernel = 1;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    bool global = false;
    std::string name;
};

struct FeatureShape {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 0;

    bool operator==(const FeatureShape&) const = default;
};

struct LayerMemory {
    std::string name;
    LayerKind kind = LayerKind::conv;
    FeatureShape output;
    std::int64_t parameters = 0;
    std::int64_t parameter_bytes = 0;
    /// batch * channels * height * width of the output map
    std::int64_t activation_elements = 0;
    std::int64_t activation_bytes = 0;
    std::int64_t cumulative_parameter_bytes = 0;
    std::int64_t cumulative_activation_bytes = 0;
};

struct MemoryReport {
    std::vector<LayerMemory> layers;
    FeatureShape input;
    std::int64_t batch = 0;
    std::int64_t bytes_per_element = 0;
    std::int64_t total_parameters = 0;
    std::int64_t total_parameter_bytes = 0;
    std::int64_t total_activation_elements = 0;
    std::int64_t total_activation_bytes = 0;

    std::string to_json() const;
    /// Fixed-width table, one row per layer, sizes in MiB.
    std::string to_table() const;
};

/// Counts trainable parameters and stored output activations layer by layer.
/// Throws ValidationError naming the layer index on a shape mismatch.
MemoryReport estimate(std::span<const LayerSpec> layers, FeatureShape input, std::int64_t batch,
                      std::int64_t bytes_per_element);

/// Parses a JSON list of layer objects:
/// {"kind": "conv", "in_channels": 3, "out_channels": 64, "kernel": 3,
///  "stride": 1, "padding": 1, "global": false, "name": "conv1"}.
std::vector<LayerSpec> parse_network(std::string_view json_text);
std::vector<LayerSpec> load_network(const std::filesystem::path& path);
std::string dump_network(std::span<const LayerSpec> layers);

/// ResNet-18 as a sequential chain for 3-channel input. Projection shortcuts
/// of the downsampling blocks are not modelled.
std::vector<LayerSpec> resnet18_chain(std::int64_t num_classes = 1000);

/// Parses "HxWxC" (e.g. "224x224x3").
FeatureShape parse_input_shape(std::string_view text);

}  // namespace crow
