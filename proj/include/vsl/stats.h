#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vsl/manifest.h"

namespace vsl {

// Bins are left-open right-closed (lo, hi]; an area of exactly 0 lands in
// the first bin. Percentages over frames (or boxes) sum to 100.
struct AreaHistogram {
    std::vector<double> bin_edges;  // size bins+1
    std::vector<double> percent;    // size bins
};

// Box-center hit mass on a fixed 224x224 grid, normalized to total mass 1.
struct CenterDensityGrid {
    int size = 224;
    std::vector<double> mass;
};

struct CountHistogram {
    std::map<int, double> percent;  // boxes-per-frame -> percentage of frames
};

std::vector<double> default_area_edges();  // 0.0, 0.1, ..., 1.0

// Ground-truth area per frame as the union of its boxes (overlaps not double
// counted); per_box switches to one observation per box instead.
AreaHistogram bbox_area_hist(const std::vector<ManifestRecord>& manifest,
                             bool per_box = false);

CenterDensityGrid center_density(const std::vector<ManifestRecord>& manifest);

// Fraction of pixels at or above bin_threshold after min-max normalization,
// one observation per `<frame_id>.hmp` found under pred_dir.
AreaHistogram heatmap_area_hist(const std::filesystem::path& pred_dir,
                                const std::vector<std::string>& frame_ids,
                                float bin_threshold);

CountHistogram boxes_per_frame(const std::vector<ManifestRecord>& manifest);

void write_area_hist_csv(const AreaHistogram& hist, const std::filesystem::path& path);
void write_count_hist_csv(const CountHistogram& hist, const std::filesystem::path& path);
void write_density_csv(const CenterDensityGrid& grid, const std::filesystem::path& path);

void render_area_hist_png(const AreaHistogram& hist, const std::filesystem::path& path);
void render_count_hist_png(const CountHistogram& hist, const std::filesystem::path& path);
void render_density_png(const CenterDensityGrid& grid, const std::filesystem::path& path);

}  // namespace vsl
