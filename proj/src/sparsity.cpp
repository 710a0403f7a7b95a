#include "crow/sparsity.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <json.hpp>

#include "crow/worker_pool.hpp"

namespace crow {

namespace {

// Segment tree over elementary y-intervals [ys[i], ys[i+1]). A node is fully
// covered when its own count is positive; otherwise its covered length is
// the sum of its children.
class CoverageTree {
public:
    explicit CoverageTree(std::vector<double> ys)
        : ys_(std::move(ys)), count_(4 * ys_.size(), 0), covered_(4 * ys_.size(), 0.0) {}

    void add(std::size_t lo, std::size_t hi, int delta) {
        if (lo < hi) update(1, 0, ys_.size() - 1, lo, hi, delta);
    }

    double covered() const { return covered_[1]; }

private:
    void update(std::size_t node, std::size_t l, std::size_t r, std::size_t lo, std::size_t hi, int delta) {
        if (hi <= l || r <= lo) return;
        if (lo <= l && r <= hi) {
            count_[node] += delta;
        } else {
            const std::size_t mid = (l + r) / 2;
            update(2 * node, l, mid, lo, hi, delta);
            update(2 * node + 1, mid, r, lo, hi, delta);
        }
        if (count_[node] > 0) {
            covered_[node] = ys_[r] - ys_[l];
        } else if (r - l == 1) {
            covered_[node] = 0.0;
        } else {
            covered_[node] = covered_[2 * node] + covered_[2 * node + 1];
        }
    }

    std::vector<double> ys_;
    std::vector<int> count_;
    std::vector<double> covered_;
};

struct Event {
    double x;
    int delta;
    double y0;
    double y1;
};

}  // namespace

double union_area(std::span<const BoundingBox> boxes) {
    std::vector<double> ys;
    std::vector<Event> events;
    ys.reserve(2 * boxes.size());
    events.reserve(2 * boxes.size());
    for (const BoundingBox& b : boxes) {
        if (!(b.w > 0.0 && b.h > 0.0)) continue;
        ys.push_back(b.y);
        ys.push_back(b.bottom());
        events.push_back({b.x, +1, b.y, b.bottom()});
        events.push_back({b.right(), -1, b.y, b.bottom()});
    }
    if (events.empty()) return 0.0;

    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.x < b.x; });

    auto index_of = [&](double y) {
        return static_cast<std::size_t>(std::lower_bound(ys.begin(), ys.end(), y) - ys.begin());
    };

    CoverageTree tree(ys);
    double area = 0.0;
    double prev_x = events.front().x;
    for (const Event& e : events) {
        area += tree.covered() * (e.x - prev_x);
        prev_x = e.x;
        tree.add(index_of(e.y0), index_of(e.y1), e.delta);
    }
    return area;
}

SparsityReport compute_sparsity(const DatasetIndex& ds, std::size_t workers, std::size_t histogram_bins) {
    std::map<std::int64_t, std::vector<BoundingBox>> boxes_by_image;
    for (const auto& ann : ds.annotations) boxes_by_image[ann.image_id].push_back(ann.bbox);

    SparsityReport report;
    report.images.resize(ds.images.size());
    parallel_for(ds.images.size(), workers, [&](std::size_t i) {
        const ImageRecord& img = ds.images[i];
        const double w = static_cast<double>(img.width);
        const double h = static_cast<double>(img.height);
        std::vector<BoundingBox> clamped;
        if (auto it = boxes_by_image.find(img.id); it != boxes_by_image.end()) {
            for (const BoundingBox& b : it->second) {
                const double x0 = std::clamp(b.x, 0.0, w);
                const double y0 = std::clamp(b.y, 0.0, h);
                const double x1 = std::clamp(b.right(), 0.0, w);
                const double y1 = std::clamp(b.bottom(), 0.0, h);
                if (x1 > x0 && y1 > y0) clamped.push_back({x0, y0, x1 - x0, y1 - y0});
            }
        }
        ImageSparsity& s = report.images[i];
        s.image_id = img.id;
        s.pixels = w * h;
        s.foreground = std::min(union_area(clamped), s.pixels);
        s.ratio = s.foreground / s.pixels;
    });

    // Sequential reduction in image order keeps the sums independent of the
    // worker count.
    for (const auto& s : report.images) {
        report.total_foreground += s.foreground;
        report.total_pixels += s.pixels;
    }
    report.ratio = report.total_pixels > 0.0 ? report.total_foreground / report.total_pixels : 0.0;

    histogram_bins = std::max<std::size_t>(histogram_bins, 1);
    report.histogram.assign(histogram_bins, 0);
    for (const auto& s : report.images) {
        auto bin = static_cast<std::size_t>(s.ratio * static_cast<double>(histogram_bins));
        ++report.histogram[std::min(bin, histogram_bins - 1)];
    }
    return report;
}

namespace {

nlohmann::ordered_json report_json(const SparsityReport& r) {
    nlohmann::ordered_json j;
    j["ratio"] = r.ratio;
    j["foreground_pixels"] = r.total_foreground;
    j["image_pixels"] = r.total_pixels;
    j["images"] = static_cast<std::int64_t>(r.images.size());
    j["histogram"] = r.histogram;
    nlohmann::ordered_json& per_image = j["per_image"] = nlohmann::ordered_json::array();
    for (const auto& s : r.images) {
        nlohmann::ordered_json e;
        e["image_id"] = s.image_id;
        e["foreground"] = s.foreground;
        e["pixels"] = s.pixels;
        e["ratio"] = s.ratio;
        per_image.push_back(std::move(e));
    }
    return j;
}

}  // namespace

std::string SparsityReport::to_json() const {
    return report_json(*this).dump(1) + "\n";
}

std::string SparsityReport::histogram_text() const {
    std::ostringstream out;
    const double width = 1.0 / static_cast<double>(histogram.size());
    out << "# ratio_low ratio_high images\n";
    for (std::size_t i = 0; i < histogram.size(); ++i) {
        out << static_cast<double>(i) * width << ' ' << static_cast<double>(i + 1) * width << ' ' << histogram[i]
            << '\n';
    }
    return out.str();
}

std::string compare_sparsity_json(const SparsityReport& before, const SparsityReport& after) {
    nlohmann::ordered_json j;
    j["before"] = report_json(before);
    j["after"] = report_json(after);
    j["ratio_change"] = after.ratio - before.ratio;
    j["ratio_factor"] = before.ratio > 0.0 ? after.ratio / before.ratio : 0.0;
    return j.dump(1) + "\n";
}

}  // namespace crow
