#pragma once

#include <filesystem>
#include <vector>

namespace vsl {

// Single-channel float score map, row-major with the top row first.
// A normalized map has all values in [0,1] and either spans the full range
// (min 0, max 1) or is identically zero (degenerate constant prediction).
struct Heatmap {
    int width = 0;
    int height = 0;
    std::vector<float> values;
    bool normalized = false;

    float at(int px, int py) const {
        return values[static_cast<size_t>(py) * width + px];
    }
    float& at(int px, int py) {
        return values[static_cast<size_t>(py) * width + px];
    }
};

Heatmap make_heatmap(int width, int height, float fill = 0.0f);

bool heatmap_invariants_ok(const Heatmap& h);

// Binary heatmap file: magic "HMP1", u32-LE width, u32-LE height, then
// width*height IEEE-754 f32-LE values, row-major, top row first.
// Round-trips are bit-exact. The normalized flag is re-derived on read.
void write_heatmap(const Heatmap& h, const std::filesystem::path& path);
Heatmap read_heatmap(const std::filesystem::path& path);

}  // namespace vsl
