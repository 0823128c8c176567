#pragma once

#include <filesystem>
#include <vector>

#include "vsl/manifest.h"

namespace vsl {

// Procedural evaluation scenes with paired keyed-tone audio. The quadrants
// kind is a 2x2 collage of four distinct textures with exactly two sounding
// quadrants (full-quadrant boxes, two mixed tones); the centered kind is one
// centered box whose area fraction is drawn from [area_min, area_max], with
// a single tone.
struct SyntheticSceneSpec {
    enum class Kind { quadrants, centered };
    Kind kind = Kind::quadrants;
    int n = 10;
    uint64_t seed = 0;
    int image_size = 224;
    double area_min = 0.5;  // centered kind only
    double area_max = 0.5;
};

// Writes images/, audio/ and manifest.jsonl under out_dir and returns the
// records. Deterministic under the spec's seed.
std::vector<ManifestRecord> synth_dataset(const SyntheticSceneSpec& spec,
                                          const std::filesystem::path& out_dir);

}  // namespace vsl
