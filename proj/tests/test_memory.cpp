#include <doctest.h>

#include <random>

#include "crow/errors.hpp"
#include "crow/memory.hpp"

using namespace crow;

namespace {

LayerSpec conv(std::int64_t in, std::int64_t out, std::int64_t k = 3, std::int64_t s = 1, std::int64_t p = 1) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel = k;
    l.stride = s;
    l.padding = p;
    return l;
}

}  // namespace

TEST_CASE("single 3x3 conv, 3 -> 64 at 224x224, batch 2") {
    const std::vector layers{conv(3, 64)};
    const MemoryReport r = estimate(layers, {224, 224, 3}, 2, 4);
    REQUIRE(r.layers.size() == 1);
    CHECK(r.total_parameters == 3 * 3 * 3 * 64 + 64);
    CHECK(r.total_parameters == 1792);
    CHECK(r.total_activation_elements == 2 * 64 * 224 * 224);
    CHECK(r.total_activation_elements == 6422528);
    CHECK(r.total_activation_bytes == 4 * 6422528);
    CHECK(r.layers[0].output == FeatureShape{224, 224, 64});
}

TEST_CASE("layer kinds") {
    SUBCASE("separable conv") {
        LayerSpec l = conv(32, 64);
        l.kind = LayerKind::separable_conv;
        // depthwise 3*3*32 (no bias), pointwise 32*64 + 64
        CHECK(estimate(std::vector{l}, {10, 10, 32}, 1, 4).total_parameters == 288 + 2048 + 64);
    }
    SUBCASE("strided pool halves the map") {
        LayerSpec p;
        p.kind = LayerKind::pool;
        p.in_channels = p.out_channels = 8;
        p.kernel = 2;
        p.stride = 2;
        const auto r = estimate(std::vector{p}, {10, 10, 8}, 1, 4);
        CHECK(r.total_parameters == 0);
        CHECK(r.layers[0].output == FeatureShape{5, 5, 8});
    }
    SUBCASE("global pool then fully connected") {
        LayerSpec p;
        p.kind = LayerKind::pool;
        p.in_channels = p.out_channels = 16;
        p.global = true;
        LayerSpec fc;
        fc.kind = LayerKind::fully_connected;
        fc.in_channels = 16;
        fc.out_channels = 10;
        const auto r = estimate(std::vector{p, fc}, {7, 7, 16}, 3, 4);
        CHECK(r.layers[0].output == FeatureShape{1, 1, 16});
        CHECK(r.layers[1].output == FeatureShape{1, 1, 10});
        CHECK(r.total_parameters == 170);
        CHECK(r.total_activation_elements == 3 * 16 + 3 * 10);
    }
    SUBCASE("residual add keeps the shape") {
        LayerSpec add;
        add.kind = LayerKind::residual_add;
        add.in_channels = add.out_channels = 4;
        const auto r = estimate(std::vector{conv(4, 4), add}, {6, 6, 4}, 1, 4);
        CHECK(r.layers[1].output == FeatureShape{6, 6, 4});
        CHECK(r.layers[1].parameters == 0);
        CHECK(r.layers[1].cumulative_activation_bytes == 2 * 6 * 6 * 4 * 4);
    }
}

TEST_CASE("shape mismatches name the layer") {
    const std::vector bad{conv(3, 64), conv(32, 64)};
    try {
        estimate(bad, {32, 32, 3}, 1, 4);
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
    CHECK_THROWS_AS(estimate(std::vector{conv(4, 8)}, {32, 32, 3}, 1, 4), ValidationError);
    CHECK_THROWS_AS(estimate(std::vector{conv(3, 8, 9, 1, 0)}, {4, 4, 3}, 1, 4), ValidationError);
    CHECK_THROWS_AS(estimate(std::vector{conv(3, 8)}, {4, 4, 3}, 0, 4), ArgumentError);
}

TEST_CASE("property: parameters ignore resolution and batch; activations scale with both") {
    std::mt19937 rng(2);
    const auto net = resnet18_chain();
    for (int i = 0; i < 50; ++i) {
        const std::int64_t side = 32 * (1 + static_cast<std::int64_t>(rng() % 16));
        const std::int64_t batch = 1 + static_cast<std::int64_t>(rng() % 8);
        const MemoryReport a = estimate(net, {side, side, 3}, batch, 4);
        const MemoryReport b = estimate(net, {2 * side, 2 * side, 3}, batch, 4);
        const MemoryReport c = estimate(net, {side, side, 3}, 2 * batch, 4);
        const MemoryReport h = estimate(net, {side, side, 3}, batch, 2);
        CHECK(a.total_parameters == b.total_parameters);
        CHECK(a.total_parameters == c.total_parameters);
        CHECK(c.total_activation_elements == 2 * a.total_activation_elements);
        CHECK(h.total_activation_bytes * 2 == a.total_activation_bytes);
        CHECK(h.total_parameter_bytes * 2 == a.total_parameter_bytes);
        // every spatial map quadruples except the global pool and fc outputs
        std::int64_t spatial_a = 0, spatial_b = 0;
        for (std::size_t k = 0; k + 2 < a.layers.size(); ++k) {
            spatial_a += a.layers[k].activation_elements;
            spatial_b += b.layers[k].activation_elements;
        }
        CHECK(spatial_b == 4 * spatial_a);
    }
}

TEST_CASE("resnet18 chain") {
    const auto net = resnet18_chain();
    const MemoryReport r = estimate(net, {224, 224, 3}, 1, 4);
    // torchvision resnet18 has 11,689,512 parameters; minus three projection
    // shortcuts (conv + batchnorm, modelled here without batchnorm)
    CHECK(r.total_parameters == 11511784);
    CHECK(r.layers.back().output == FeatureShape{1, 1, 1000});
    CHECK(r.layers.front().output == FeatureShape{112, 112, 64});
}

TEST_CASE("network json round trip and errors") {
    const auto net = resnet18_chain();
    CHECK(dump_network(parse_network(dump_network(net))) == dump_network(net));
    const auto parsed = parse_network(R"([{"kind": "conv", "in_channels": 3, "out_channels": 8, "kernel": 3}])");
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].stride == 1);
    CHECK(parsed[0].padding == 0);
    CHECK_THROWS_AS(parse_network(R"([{"kind": "lstm"}])"), ValidationError);
    CHECK_THROWS_AS(parse_network(R"([{"kind": "conv", "in_channels": 1.5}])"), ValidationError);
    CHECK_THROWS_AS(parse_network(R"({})"), ValidationError);
    CHECK_THROWS_AS(parse_network("[{"), ParseError);
    CHECK(layer_kind_from_string("separable_conv") == LayerKind::separable_conv);
}

TEST_CASE("input shape parsing") {
    CHECK(parse_input_shape("224x224x3") == FeatureShape{224, 224, 3});
    CHECK(parse_input_shape("10x20x1") == FeatureShape{10, 20, 1});
    CHECK_THROWS_AS(parse_input_shape("224x224"), ArgumentError);
    CHECK_THROWS_AS(parse_input_shape("0x1x1"), ArgumentError);
    CHECK_THROWS_AS(parse_input_shape("1x1x1x"), ArgumentError);
    CHECK_THROWS_AS(parse_input_shape("axbxc"), ArgumentError);
}

TEST_CASE("table and json") {
    const MemoryReport r = estimate(std::vector{conv(3, 64)}, {224, 224, 3}, 2, 4);
    CHECK(r.to_table().find("1792") != std::string::npos);
    CHECK(r.to_json().find("\"total_parameters\": 1792") != std::string::npos);
}
