#include "crow/memory.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "crow/dataset.hpp"
#include "crow/errors.hpp"

namespace crow {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::separable_conv: return "separable_conv";
        case LayerKind::pool: return "pool";
        case LayerKind::fully_connected: return "fully_connected";
        case LayerKind::residual_add: return "residual_add";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
    for (LayerKind k : {LayerKind::conv, LayerKind::separable_conv, LayerKind::pool, LayerKind::fully_connected,
                        LayerKind::residual_add}) {
        if (to_string(k) == name) return k;
    }
    throw ValidationError("unknown layer kind \"" + std::string(name) + "\"");
}

namespace {

std::int64_t output_extent(std::int64_t in, const LayerSpec& l, std::size_t index) {
    const std::int64_t span = in + 2 * l.padding - l.kernel;
    if (span < 0) {
        throw ValidationError("layer " + std::to_string(index) + ": kernel " + std::to_string(l.kernel) +
                              " does not fit a padded extent of " + std::to_string(in + 2 * l.padding));
    }
    return span / l.stride + 1;
}

void require(bool ok, std::size_t index, const std::string& what) {
    if (!ok) throw ValidationError("layer " + std::to_string(index) + ": " + what);
}

}  // namespace

MemoryReport estimate(std::span<const LayerSpec> layers, FeatureShape input, std::int64_t batch,
                      std::int64_t bytes_per_element) {
    if (input.height < 1 || input.width < 1 || input.channels < 1) {
        throw ArgumentError("input shape must be positive");
    }
    if (batch < 1) throw ArgumentError("batch must be >= 1");
    if (bytes_per_element < 1) throw ArgumentError("bytes per element must be >= 1");

    MemoryReport report;
    report.input = input;
    report.batch = batch;
    report.bytes_per_element = bytes_per_element;

    FeatureShape cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        LayerMemory m;
        m.kind = l.kind;
        m.name = l.name.empty() ? std::string(to_string(l.kind)) + std::to_string(i) : l.name;

        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::separable_conv: {
                require(l.kernel >= 1 && l.stride >= 1 && l.padding >= 0, i, "kernel and stride must be >= 1, padding >= 0");
                require(l.out_channels >= 1, i, "out_channels must be >= 1");
                require(l.in_channels == cur.channels, i,
                        "expects " + std::to_string(l.in_channels) + " input channels, got " + std::to_string(cur.channels));
                const std::int64_t k2 = l.kernel * l.kernel;
                m.parameters = l.kind == LayerKind::conv
                                   ? k2 * l.in_channels * l.out_channels + l.out_channels
                                   : k2 * l.in_channels + l.in_channels * l.out_channels + l.out_channels;
                m.output = {output_extent(cur.height, l, i), output_extent(cur.width, l, i), l.out_channels};
                break;
            }
            case LayerKind::pool: {
                require(l.in_channels == 0 || l.in_channels == cur.channels, i, "pool channel mismatch");
                require(l.out_channels == 0 || l.out_channels == cur.channels, i, "pool cannot change channel count");
                if (l.global) {
                    m.output = {1, 1, cur.channels};
                } else {
                    require(l.kernel >= 1 && l.stride >= 1 && l.padding >= 0, i,
                            "kernel and stride must be >= 1, padding >= 0");
                    m.output = {output_extent(cur.height, l, i), output_extent(cur.width, l, i), cur.channels};
                }
                break;
            }
            case LayerKind::fully_connected: {
                const std::int64_t flat = cur.channels * cur.height * cur.width;
                require(l.out_channels >= 1, i, "out_channels must be >= 1");
                require(l.in_channels == flat, i,
                        "expects " + std::to_string(l.in_channels) + " inputs, got " + std::to_string(flat));
                m.parameters = l.in_channels * l.out_channels + l.out_channels;
                m.output = {1, 1, l.out_channels};
                break;
            }
            case LayerKind::residual_add: {
                require(l.in_channels == 0 || l.in_channels == cur.channels, i, "residual channel mismatch");
                require(l.out_channels == 0 || l.out_channels == cur.channels, i, "residual cannot change channel count");
                m.output = cur;
                break;
            }
        }

        m.parameter_bytes = m.parameters * bytes_per_element;
        m.activation_elements = batch * m.output.channels * m.output.height * m.output.width;
        m.activation_bytes = m.activation_elements * bytes_per_element;
        report.total_parameters += m.parameters;
        report.total_parameter_bytes += m.parameter_bytes;
        report.total_activation_elements += m.activation_elements;
        report.total_activation_bytes += m.activation_bytes;
        m.cumulative_parameter_bytes = report.total_parameter_bytes;
        m.cumulative_activation_bytes = report.total_activation_bytes;
        report.layers.push_back(std::move(m));
        cur = report.layers.back().output;
    }
    return report;
}

std::string MemoryReport::to_json() const {
    nlohmann::ordered_json j;
    j["input"] = {{"height", input.height}, {"width", input.width}, {"channels", input.channels}};
    j["batch"] = batch;
    j["bytes_per_element"] = bytes_per_element;
    j["total_parameters"] = total_parameters;
    j["total_parameter_bytes"] = total_parameter_bytes;
    j["total_activation_elements"] = total_activation_elements;
    j["total_activation_bytes"] = total_activation_bytes;
    nlohmann::ordered_json& rows = j["layers"] = nlohmann::ordered_json::array();
    for (const auto& m : layers) {
        nlohmann::ordered_json r;
        r["name"] = m.name;
        r["kind"] = std::string(to_string(m.kind));
        r["output"] = {m.output.height, m.output.width, m.output.channels};
        r["parameters"] = m.parameters;
        r["parameter_bytes"] = m.parameter_bytes;
        r["activation_elements"] = m.activation_elements;
        r["activation_bytes"] = m.activation_bytes;
        r["cumulative_parameter_bytes"] = m.cumulative_parameter_bytes;
        r["cumulative_activation_bytes"] = m.cumulative_activation_bytes;
        rows.push_back(std::move(r));
    }
    return j.dump(1) + "\n";
}

std::string MemoryReport::to_table() const {
    constexpr double kMiB = 1024.0 * 1024.0;
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %-16s %-16s %12s %10s %10s %10s %10s\n", "layer", "kind", "output",
                  "params", "param MiB", "act MiB", "cum param", "cum act");
    out << line;
    for (const auto& m : layers) {
        const std::string shape = std::to_string(m.output.height) + "x" + std::to_string(m.output.width) + "x" +
                                  std::to_string(m.output.channels);
        std::snprintf(line, sizeof line, "%-16s %-16s %-16s %12lld %10.3f %10.3f %10.3f %10.3f\n", m.name.c_str(),
                      std::string(to_string(m.kind)).c_str(), shape.c_str(), static_cast<long long>(m.parameters),
                      static_cast<double>(m.parameter_bytes) / kMiB, static_cast<double>(m.activation_bytes) / kMiB,
                      static_cast<double>(m.cumulative_parameter_bytes) / kMiB,
                      static_cast<double>(m.cumulative_activation_bytes) / kMiB);
        out << line;
    }
    std::snprintf(line, sizeof line, "total: %lld parameters, %.3f MiB parameters, %.3f MiB activations (batch %lld)\n",
                  static_cast<long long>(total_parameters), static_cast<double>(total_parameter_bytes) / kMiB,
                  static_cast<double>(total_activation_bytes) / kMiB, static_cast<long long>(batch));
    out << line;
    return out.str();
}

std::vector<LayerSpec> parse_network(std::string_view json_text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(json_text.begin(), json_text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    if (!root.is_array()) throw ValidationError("network description must be a JSON array of layers");

    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i < root.size(); ++i) {
        const auto& j = root[i];
        const std::string where = "layer " + std::to_string(i);
        if (!j.is_object()) throw ValidationError(where + " must be an object");
        auto kind = j.find("kind");
        if (kind == j.end() || !kind->is_string()) throw ValidationError(where + ": missing \"kind\"");
        LayerSpec l;
        l.kind = layer_kind_from_string(kind->get<std::string>());
        auto get_int = [&](const char* key, std::int64_t fallback) {
            auto it = j.find(key);
            if (it == j.end()) return fallback;
            if (!it->is_number_integer()) throw ValidationError(where + ": \"" + key + "\" must be an integer");
            return it->get<std::int64_t>();
        };
        l.in_channels = get_int("in_channels", 0);
        l.out_channels = get_int("out_channels", 0);
        l.kernel = get_int("kernel", 1);
        l.stride = get_int("stride", 1);
        l.padding = get_int("padding", 0);
        if (auto it = j.find("global"); it != j.end()) {
            if (!it->is_boolean()) throw ValidationError(where + ": \"global\" must be a boolean");
            l.global = it->get<bool>();
        }
        if (auto it = j.find("name"); it != j.end()) {
            if (!it->is_string()) throw ValidationError(where + ": \"name\" must be a string");
            l.name = it->get<std::string>();
        }
        layers.push_back(std::move(l));
    }
    return layers;
}

std::vector<LayerSpec> load_network(const std::filesystem::path& path) {
    return parse_network(read_text_file(path));
}

std::string dump_network(std::span<const LayerSpec> layers) {
    nlohmann::ordered_json root = nlohmann::ordered_json::array();
    for (const auto& l : layers) {
        nlohmann::ordered_json j;
        if (!l.name.empty()) j["name"] = l.name;
        j["kind"] = std::string(to_string(l.kind));
        j["in_channels"] = l.in_channels;
        j["out_channels"] = l.out_channels;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        if (l.global) j["global"] = true;
        root.push_back(std::move(j));
    }
    return root.dump(1) + "\n";
}

std::vector<LayerSpec> resnet18_chain(std::int64_t num_classes) {
    std::vector<LayerSpec> net;
    net.push_back({LayerKind::conv, 3, 64, 7, 2, 3, false, "conv1"});
    net.push_back({LayerKind::pool, 64, 64, 3, 2, 1, false, "maxpool"});
    std::int64_t in = 64;
    int stage = 1;
    for (std::int64_t out : {64, 128, 256, 512}) {
        for (int block = 0; block < 2; ++block) {
            const std::string prefix = "layer" + std::to_string(stage) + "." + std::to_string(block) + ".";
            const std::int64_t stride = (block == 0 && out != 64) ? 2 : 1;
            net.push_back({LayerKind::conv, in, out, 3, stride, 1, false, prefix + "conv1"});
            net.push_back({LayerKind::conv, out, out, 3, 1, 1, false, prefix + "conv2"});
            net.push_back({LayerKind::residual_add, out, out, 1, 1, 0, false, prefix + "add"});
            in = out;
        }
        ++stage;
    }
    net.push_back({LayerKind::pool, 512, 512, 1, 1, 0, true, "avgpool"});
    net.push_back({LayerKind::fully_connected, 512, num_classes, 1, 1, 0, false, "fc"});
    return net;
}

FeatureShape parse_input_shape(std::string_view text) {
    std::int64_t v[3] = {0, 0, 0};
    const char* p = text.data();
    const char* end = text.data() + text.size();
    for (int i = 0; i < 3; ++i) {
        auto [next, ec] = std::from_chars(p, end, v[i]);
        if (ec != std::errc{} || v[i] < 1) throw ArgumentError("input shape must look like HxWxC, got " + std::string(text));
        p = next;
        if (i < 2) {
            if (p == end || (*p != 'x' && *p != 'X')) {
                throw ArgumentError("input shape must look like HxWxC, got " + std::string(text));
            }
            ++p;
        }
    }
    if (p != end) throw ArgumentError("input shape must look like HxWxC, got " + std::string(text));
    return {v[0], v[1], v[2]};
}

}  // namespace crow
