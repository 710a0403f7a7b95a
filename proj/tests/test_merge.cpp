#include <doctest.h>

#include <random>

#include "crow/errors.hpp"
#include "crow/merge.hpp"
#include "oracles.hpp"

using namespace crow;

namespace {

DetectionRecord det(BoundingBox b, double score, std::int64_t cat = 1) {
    DetectionRecord d;
    d.image_id = 1;
    d.bbox = b;
    d.category_id = cat;
    d.score = score;
    return d;
}

}  // namespace

TEST_CASE("iou examples") {
    CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
    CHECK(iou({0, 0, 10, 10}, {20, 20, 5, 5}) == 0.0);
    CHECK(iou({0, 0, 10, 10}, {10, 0, 10, 10}) == 0.0);
    CHECK(iou({0, 0, 10, 10}, {1, 1, 10, 10}) == 81.0 / 119.0);
    CHECK(iou({0, 0, 10, 10}, {1, 1, 10, 10}) == doctest::Approx(0.6807).epsilon(1e-4));
}

TEST_CASE("property: iou matches the corner-coordinate oracle and is symmetric") {
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> p(0, 50), s(0.1, 30);
    for (int i = 0; i < 5000; ++i) {
        const BoundingBox a{p(rng), p(rng), s(rng), s(rng)}, b{p(rng), p(rng), s(rng), s(rng)};
        CHECK(iou(a, b) == doctest::Approx(oracle::corner_iou(a, b)).epsilon(1e-12));
        CHECK(iou(a, b) == iou(b, a));
        CHECK(iou(a, b) >= 0.0);
        CHECK(iou(a, b) <= 1.0);
    }
}

TEST_CASE("remap_to_frame") {
    CrowConfig cfg;
    const TileLayout layout = compute_layout(1024, 1024, cfg);
    SUBCASE("translation") {
        DetectionRecord d = det({10, 10, 20, 20}, 0.5);
        d.tile = TileIndex{1, 1};
        auto r = remap_to_frame(std::vector{d}, layout);
        REQUIRE(r.size() == 1);
        CHECK(r[0].bbox == BoundingBox{266, 266, 20, 20});
        CHECK_FALSE(r[0].tile);
    }
    SUBCASE("origin tile is the identity") {
        DetectionRecord d = det({10, 10, 20, 20}, 0.5);
        d.tile = TileIndex{0, 0};
        CHECK(remap_to_frame(std::vector{d}, layout)[0].bbox == d.bbox);
    }
    SUBCASE("clamp at the far corner") {
        DetectionRecord d = det({500, 500, 30, 30}, 0.5);
        d.tile = TileIndex{2, 2};
        auto r = remap_to_frame(std::vector{d}, layout);
        CHECK(r[0].bbox == BoundingBox{1012, 1012, 12, 12});
    }
    SUBCASE("unknown tile") {
        DetectionRecord d = det({0, 0, 1, 1}, 0.5);
        d.tile = TileIndex{3, 0};
        CHECK_THROWS_AS(remap_to_frame(std::vector{d}, layout), ArgumentError);
    }
    SUBCASE("single-tile layout is the identity") {
        const TileLayout one = compute_layout(400, 300, cfg);
        std::mt19937 rng(1);
        std::vector<DetectionRecord> dets;
        for (int i = 0; i < 50; ++i) {
            DetectionRecord d = det({double(rng() % 300), double(rng() % 200), 1.0 + rng() % 99, 1.0 + rng() % 99}, 0.3);
            d.tile = TileIndex{0, 0};
            dets.push_back(d);
        }
        auto r = remap_to_frame(dets, one);
        REQUIRE(r.size() == dets.size());
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i].bbox == dets[i].bbox);
    }
}

TEST_CASE("nms examples") {
    const auto a = det({0, 0, 10, 10}, 0.9), b = det({1, 1, 10, 10}, 0.8);
    auto kept = nms(std::vector{a, b}, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0] == a);
    CHECK(nms(std::vector{a, det({30, 30, 5, 5}, 0.7)}, 0.5).size() == 2);
    CHECK(nms(std::vector{a, det({1, 1, 10, 10}, 0.8, 2)}, 0.5).size() == 2);
    // order by score, ties by input position
    auto tie = nms(std::vector{det({0, 0, 5, 5}, 0.5), det({50, 50, 5, 5}, 0.9), det({0, 0, 5, 5}, 0.5)}, 0.5);
    REQUIRE(tie.size() == 2);
    CHECK(tie[0].score == 0.9);
    CHECK(nms(std::vector<DetectionRecord>{}, 0.5).empty());
    CHECK_THROWS_AS(nms(std::vector{a}, 1.5), ArgumentError);
}

TEST_CASE("property: nms equals the brute-force greedy reference") {
    std::mt19937 rng(31337);
    for (int i = 0; i < 2000; ++i) {
        const int n = static_cast<int>(rng() % 11);
        std::vector<DetectionRecord> dets;
        for (int k = 0; k < n; ++k) {
            // coarse scores force ties
            dets.push_back(det({double(rng() % 20), double(rng() % 20), 1.0 + rng() % 15, 1.0 + rng() % 15},
                               double(rng() % 5) / 4.0, 1 + static_cast<std::int64_t>(rng() % 2)));
        }
        const double thr = double(rng() % 11) / 10.0;
        const auto kept = nms(dets, thr);
        const auto ref = oracle::brute_force_nms(dets, thr);
        REQUIRE(kept.size() == ref.size());
        for (std::size_t k = 0; k < ref.size(); ++k) CHECK(kept[k] == dets[ref[k]]);
        for (std::size_t p = 0; p < kept.size(); ++p) {
            for (std::size_t q = p + 1; q < kept.size(); ++q) {
                if (kept[p].category_id == kept[q].category_id) CHECK(iou(kept[p].bbox, kept[q].bbox) < thr);
            }
        }
    }
}

TEST_CASE("an object cut by a tile boundary survives NMS twice") {
    // A 40x20 object at x 496..536 straddles the edge of tile column 0
    // (0..512) and is not inside the column starting at 512... but column 1
    // (256..768) holds it fully. With zero overlap, no tile contains it.
    CrowConfig cfg;
    cfg.beta = 0.0;
    const TileLayout layout = compute_layout(1024, 512, cfg);
    REQUIRE(layout.cols == 2);
    DetectionRecord left = det({496, 100, 16, 20}, 0.9);
    left.tile = TileIndex{0, 0};
    DetectionRecord right = det({0, 100, 24, 20}, 0.8);
    right.tile = TileIndex{0, 1};
    auto frame = remap_to_frame(std::vector{left, right}, layout);
    CHECK(iou(frame[0].bbox, frame[1].bbox) == 0.0);
    auto merged = nms(frame, 0.5);
    CHECK(merged.size() == 2);
}

TEST_CASE("merge_tiled_detections groups by image") {
    DatasetIndex ds;
    ds.images.push_back({1, "a", 1024, 1024});
    ds.images.push_back({2, "b", 512, 512});
    DetectionRecord d1 = det({10, 10, 20, 20}, 0.9);
    d1.tile = TileIndex{1, 1};
    DetectionRecord d2 = det({266, 266, 20, 20}, 0.8);  // full-frame duplicate of d1
    DetectionRecord d3 = det({0, 0, 5, 5}, 0.7);
    d3.image_id = 2;
    auto merged = merge_tiled_detections(std::vector{d3, d1, d2}, ds, CrowConfig{}, 0.5);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].image_id == 1);
    CHECK(merged[0].score == 0.9);
    CHECK(merged[1].image_id == 2);
    DetectionRecord bad = d3;
    bad.image_id = 9;
    CHECK_THROWS_AS(merge_tiled_detections(std::vector{bad}, ds, CrowConfig{}, 0.5), ReferenceError);
}

TEST_CASE("detections file parsing") {
    const auto dets = parse_detections(R"([
      {"image_id": 1, "tile": [0, 1], "bbox": [1, 2, 3, 4], "category_id": 2, "score": 0.5},
      {"image_id": 1, "bbox": [1, 2, 3, 4], "category_id": 2, "score": 1}])");
    REQUIRE(dets.size() == 2);
    CHECK(dets[0].tile == TileIndex{0, 1});
    CHECK_FALSE(dets[1].tile);
    CHECK(parse_detections(dump_detections(dets)) == dets);
    CHECK_THROWS_AS(parse_detections(R"([{"image_id": 1, "bbox": [1, 2, 3, 4], "category_id": 2, "score": 1.5}])"),
                    ValidationError);
    CHECK_THROWS_AS(parse_detections(R"([{"image_id": 1, "bbox": [1, 2, 0, 4], "category_id": 2, "score": 0.5}])"),
                    ValidationError);
    CHECK_THROWS_AS(parse_detections(R"({"image_id": 1})"), ValidationError);
    CHECK_THROWS_AS(parse_detections("[{"), ParseError);
}
