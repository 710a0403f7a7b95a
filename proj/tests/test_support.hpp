#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "crow/dataset.hpp"

namespace crow::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("crow_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Deterministic 8-bit BGR noise image.
inline cv::Mat noise_image(int width, int height, unsigned seed) {
    cv::Mat img(height, width, CV_8UC3);
    std::mt19937 rng(seed);
    for (int y = 0; y < height; ++y) {
        auto* row = img.ptr<unsigned char>(y);
        for (int x = 0; x < width * 3; ++x) row[x] = static_cast<unsigned char>(rng() & 0xff);
    }
    return img;
}

inline void write_png(const std::filesystem::path& path, const cv::Mat& img) {
    cv::imwrite(path.string(), img);
}

/// One 1024x1024 image with one 32x32 box at the origin.
inline DatasetIndex single_box_fixture() {
    DatasetIndex ds;
    ds.images.push_back({1, "img1.png", 1024, 1024});
    ds.categories.push_back({1, "car"});
    AnnotationRecord ann;
    ann.id = 1;
    ann.image_id = 1;
    ann.bbox = {0, 0, 32, 32};
    ann.category_id = 1;
    ann.area = 1024;
    ds.annotations.push_back(ann);
    return ds;
}

}  // namespace crow::testing
