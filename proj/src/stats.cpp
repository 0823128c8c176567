#include "vsl/stats.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vsl/errors.h"
#include "vsl/geometry.h"
#include "vsl/heatmap.h"
#include "vsl/image_io.h"
#include "vsl/metrics.h"

namespace vsl {

std::vector<double> default_area_edges() {
    std::vector<double> edges;
    for (int i = 0; i <= 10; ++i) edges.push_back(i * 0.1);
    edges.back() = 1.0;
    return edges;
}

namespace {

int bin_index(double value, const std::vector<double>& edges) {
    const int bins = static_cast<int>(edges.size()) - 1;
    for (int i = 0; i < bins; ++i) {
        if (value <= edges[i + 1]) return i;
    }
    return bins - 1;
}

AreaHistogram from_observations(const std::vector<double>& obs) {
    AreaHistogram hist;
    hist.bin_edges = default_area_edges();
    hist.percent.assign(hist.bin_edges.size() - 1, 0.0);
    if (obs.empty()) throw ContractError("area histogram: no observations");
    for (double v : obs) {
        hist.percent[bin_index(v, hist.bin_edges)] += 1.0;
    }
    const double scale = 100.0 / static_cast<double>(obs.size());
    for (double& p : hist.percent) p *= scale;
    return hist;
}

}  // namespace

AreaHistogram bbox_area_hist(const std::vector<ManifestRecord>& manifest, bool per_box) {
    if (manifest.empty()) throw ContractError("bbox_area_hist: empty manifest");
    std::vector<double> obs;
    for (const ManifestRecord& rec : manifest) {
        const FrameAnnotation& ann = rec.annotation;
        const double frame_area = static_cast<double>(ann.width) * ann.height;
        if (per_box) {
            for (const BoundingBox& b : ann.boxes) {
                obs.push_back(static_cast<double>(b.area()) / frame_area);
            }
        } else if (ann.boxes.empty()) {
            obs.push_back(0.0);
        } else {
            obs.push_back(static_cast<double>(gt_mask(ann, 1).count()) / frame_area);
        }
    }
    return from_observations(obs);
}

CenterDensityGrid center_density(const std::vector<ManifestRecord>& manifest) {
    if (manifest.empty()) throw ContractError("center_density: empty manifest");
    CenterDensityGrid grid;
    grid.mass.assign(static_cast<size_t>(grid.size) * grid.size, 0.0);
    int64_t n_boxes = 0;
    for (const ManifestRecord& rec : manifest) {
        const FrameAnnotation& ann = rec.annotation;
        for (const BoundingBox& b : ann.boxes) {
            int gx = static_cast<int>(b.center_x() * grid.size / ann.width);
            int gy = static_cast<int>(b.center_y() * grid.size / ann.height);
            gx = std::clamp(gx, 0, grid.size - 1);
            gy = std::clamp(gy, 0, grid.size - 1);
            grid.mass[static_cast<size_t>(gy) * grid.size + gx] += 1.0;
            ++n_boxes;
        }
    }
    if (n_boxes > 0) {
        for (double& m : grid.mass) m /= static_cast<double>(n_boxes);
    }
    return grid;
}

AreaHistogram heatmap_area_hist(const std::filesystem::path& pred_dir,
                                const std::vector<std::string>& frame_ids,
                                float bin_threshold) {
    std::vector<double> obs;
    obs.reserve(frame_ids.size());
    for (const std::string& frame : frame_ids) {
        Heatmap h = read_heatmap(pred_dir / (frame + ".hmp"));
        // constant maps keep their level: an all-ones prediction covers the
        // whole frame for area purposes, it is not an empty prediction
        const auto [lo, hi] = std::minmax_element(h.values.begin(), h.values.end());
        if (*hi > *lo) h = minmax_normalize(h);
        int64_t hits = 0;
        for (float v : h.values) {
            if (v >= bin_threshold) ++hits;
        }
        obs.push_back(static_cast<double>(hits) / static_cast<double>(h.values.size()));
    }
    return from_observations(obs);
}

CountHistogram boxes_per_frame(const std::vector<ManifestRecord>& manifest) {
    if (manifest.empty()) throw ContractError("boxes_per_frame: empty manifest");
    CountHistogram hist;
    for (const ManifestRecord& rec : manifest) {
        hist.percent[static_cast<int>(rec.annotation.boxes.size())] += 1.0;
    }
    const double scale = 100.0 / static_cast<double>(manifest.size());
    for (auto& [count, pct] : hist.percent) pct *= scale;
    return hist;
}

// ------------------------------------------------------------------- CSV

void write_area_hist_csv(const AreaHistogram& hist, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_area_hist_csv: cannot open " + path.string());
    out << "bin_lo,bin_hi,percent\n";
    char buf[96];
    for (size_t i = 0; i < hist.percent.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.4f\n", hist.bin_edges[i],
                      hist.bin_edges[i + 1], hist.percent[i]);
        out << buf;
    }
}

void write_count_hist_csv(const CountHistogram& hist, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_count_hist_csv: cannot open " + path.string());
    out << "boxes,percent\n";
    char buf[64];
    for (const auto& [count, pct] : hist.percent) {
        std::snprintf(buf, sizeof(buf), "%d,%.4f\n", count, pct);
        out << buf;
    }
}

void write_density_csv(const CenterDensityGrid& grid, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_density_csv: cannot open " + path.string());
    char buf[32];
    for (int y = 0; y < grid.size; ++y) {
        for (int x = 0; x < grid.size; ++x) {
            std::snprintf(buf, sizeof(buf), "%.9g", grid.mass[static_cast<size_t>(y) * grid.size + x]);
            out << buf << (x + 1 < grid.size ? "," : "");
        }
        out << "\n";
    }
}

// ------------------------------------------------------------------- PNG

namespace {

struct Canvas {
    int w, h;
    std::vector<uint8_t> rgb;

    Canvas(int width, int height, uint8_t fill = 255)
        : w(width), h(height), rgb(static_cast<size_t>(width) * height * 3, fill) {}

    void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        const size_t p = (static_cast<size_t>(y) * w + x) * 3;
        rgb[p] = r;
        rgb[p + 1] = g;
        rgb[p + 2] = b;
    }

    void fill_rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) set(x, y, r, g, b);
        }
    }

    void save(const std::filesystem::path& path) const {
        ImageRgb8 image;
        image.width = w;
        image.height = h;
        image.pixels = rgb;
        write_png(image, path);
    }
};

void render_bars(const std::vector<double>& values, const std::filesystem::path& path) {
    const int width = 480, height = 320, margin = 24;
    Canvas canvas(width, height);
    double vmax = 0.0;
    for (double v : values) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;
    const int plot_w = width - 2 * margin;
    const int plot_h = height - 2 * margin;
    const int n = static_cast<int>(values.size());
    const double bar_w = static_cast<double>(plot_w) / n;
    for (int i = 0; i < n; ++i) {
        const int x0 = margin + static_cast<int>(i * bar_w) + 1;
        const int x1 = margin + static_cast<int>((i + 1) * bar_w) - 1;
        const int bh = static_cast<int>(std::lround(values[i] / vmax * plot_h));
        canvas.fill_rect(x0, height - margin - bh, x1, height - margin, 70, 110, 180);
    }
    // axes
    canvas.fill_rect(margin - 1, margin, margin, height - margin + 1, 0, 0, 0);
    canvas.fill_rect(margin - 1, height - margin, width - margin, height - margin + 1, 0, 0, 0);
    canvas.save(path);
}

}  // namespace

void render_area_hist_png(const AreaHistogram& hist, const std::filesystem::path& path) {
    render_bars(hist.percent, path);
}

void render_count_hist_png(const CountHistogram& hist, const std::filesystem::path& path) {
    // bars for counts 0 .. max observed
    int max_count = 0;
    for (const auto& [count, pct] : hist.percent) max_count = std::max(max_count, count);
    std::vector<double> values(static_cast<size_t>(max_count) + 1, 0.0);
    for (const auto& [count, pct] : hist.percent) values[count] = pct;
    render_bars(values, path);
}

void render_density_png(const CenterDensityGrid& grid, const std::filesystem::path& path) {
    double vmax = 0.0;
    for (double m : grid.mass) vmax = std::max(vmax, m);
    Canvas canvas(grid.size, grid.size, 0);
    for (int y = 0; y < grid.size; ++y) {
        for (int x = 0; x < grid.size; ++x) {
            const double m = grid.mass[static_cast<size_t>(y) * grid.size + x];
            const uint8_t v =
                vmax > 0.0 ? static_cast<uint8_t>(std::lround(m / vmax * 255.0)) : 0;
            canvas.set(x, y, v, v, v);
        }
    }
    canvas.save(path);
}

}  // namespace vsl
