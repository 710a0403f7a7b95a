#include <doctest.h>

#include <random>

#include "crow/sparsity.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace crow;

TEST_CASE("union_area examples") {
    CHECK(union_area({}) == 0.0);
    const std::vector<BoundingBox> one{{0, 0, 10, 10}};
    CHECK(union_area(one) == 100.0);
    const std::vector<BoundingBox> two{{0, 0, 10, 10}, {5, 5, 10, 10}};
    CHECK(oracle::raster_union_area(two, 20) == 175);
    CHECK(union_area(two) == 175.0);
    const std::vector<BoundingBox> nested{{0, 0, 10, 10}, {2, 2, 3, 3}};
    CHECK(union_area(nested) == 100.0);
    const std::vector<BoundingBox> fractional{{0.5, 0.5, 1.5, 2.0}, {1.0, 0.5, 1.0, 2.0}};
    CHECK(union_area(fractional) == doctest::Approx(3.0));
}

TEST_CASE("property: union_area equals grid rasterization") {
    std::mt19937 rng(4242);
    for (int i = 0; i < 1000; ++i) {
        const int n = static_cast<int>(rng() % 21);
        std::vector<BoundingBox> boxes;
        for (int k = 0; k < n; ++k) {
            const int x = static_cast<int>(rng() % 63), y = static_cast<int>(rng() % 63);
            const int w = 1 + static_cast<int>(rng() % static_cast<unsigned>(64 - x));
            const int h = 1 + static_cast<int>(rng() % static_cast<unsigned>(64 - y));
            boxes.push_back({double(x), double(y), double(w), double(h)});
        }
        const double expected = static_cast<double>(oracle::raster_union_area(boxes, 64));
        REQUIRE(union_area(boxes) == expected);

        auto shuffled = boxes;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        shuffled.insert(shuffled.end(), boxes.begin(), boxes.begin() + n / 2);
        CHECK(union_area(shuffled) == expected);
    }
}

TEST_CASE("compute_sparsity examples") {
    SUBCASE("one 32x32 box in 1024x1024") {
        const SparsityReport r = compute_sparsity(testing::single_box_fixture());
        CHECK(r.total_foreground == 1024.0);
        CHECK(r.total_pixels == 1048576.0);
        CHECK(r.ratio == 1024.0 / 1048576.0);
        CHECK(r.histogram[0] == 1);
    }
    SUBCASE("tile plus full frame") {
        DatasetIndex ds = testing::single_box_fixture();
        ds.images[0] = {1, "t.png", 512, 512};
        ds.images.push_back({2, "f.png", 1024, 1024});
        AnnotationRecord second = ds.annotations[0];
        second.id = 2;
        second.image_id = 2;
        ds.annotations.push_back(second);
        const SparsityReport r = compute_sparsity(ds);
        CHECK(r.total_foreground == 2048.0);
        CHECK(r.total_pixels == 1310720.0);
        CHECK(r.ratio == 2048.0 / 1310720.0);
    }
    SUBCASE("saturated image") {
        DatasetIndex ds;
        ds.images.push_back({1, "a", 40, 30});
        ds.categories.push_back({1, "x"});
        ds.annotations.push_back({1, 1, {0, 0, 40, 30}, 1, 1200, false, false});
        ds.annotations.push_back({2, 1, {10, 10, 5, 5}, 1, 25, false, false});
        const SparsityReport r = compute_sparsity(ds, 1, 10);
        CHECK(r.ratio == 1.0);
        CHECK(r.histogram.back() == 1);
    }
    SUBCASE("empty dataset") {
        const SparsityReport r = compute_sparsity(DatasetIndex{});
        CHECK(r.ratio == 0.0);
        CHECK(r.images.empty());
    }
}

TEST_CASE("boxes overflowing the image are clamped") {
    DatasetIndex ds;
    ds.images.push_back({1, "a", 10, 10});
    ds.categories.push_back({1, "x"});
    // bypasses load-time validation on purpose
    ds.annotations.push_back({1, 1, {5, 5, 20, 20}, 1, 400, false, false});
    const SparsityReport r = compute_sparsity(ds);
    CHECK(r.images[0].foreground == 25.0);
}

TEST_CASE("worker count does not change the report") {
    DatasetIndex ds;
    ds.categories.push_back({1, "x"});
    std::mt19937 rng(3);
    for (int i = 1; i <= 40; ++i) {
        ds.images.push_back({i, "a", 500, 300});
        for (int k = 0; k < 10; ++k) {
            const double x = rng() % 400, y = rng() % 200;
            ds.annotations.push_back({i * 100 + k, i, {x, y, 1.5 + rng() % 90, 0.25 + rng() % 90}, 1, 1.0, false, false});
        }
    }
    const std::string one = compute_sparsity(ds, 1).to_json();
    CHECK(compute_sparsity(ds, 7).to_json() == one);
}

TEST_CASE("histogram text has one row per bin") {
    const SparsityReport r = compute_sparsity(testing::single_box_fixture(), 1, 4);
    const std::string text = r.histogram_text();
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
    CHECK(text.find("0 0.25 1\n") != std::string::npos);
}
