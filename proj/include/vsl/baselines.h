#pragma once

#include <array>

#include "vsl/geometry.h"
#include "vsl/heatmap.h"

namespace vsl {

enum class BaselineKind { center, quadrants };

struct BaselineSpec {
    BaselineKind kind = BaselineKind::center;
    // Fraction of image area covered: whole box for center (default 0.5),
    // per box for quadrants (default 1/8, each box must fit its quadrant).
    double area_frac = 0.5;
    // center only: force a square box instead of the frame's aspect ratio
    bool square = false;
};

void validate_spec(const BaselineSpec& spec);

// Box of exactly area_frac of the frame, aspect-matched (or square), centered.
// Width/height round half-to-even; the centering offsets round half-up.
BoundingBox center_box(int width, int height, double area_frac, bool square = false);

// Four boxes of area_frac_each, one concentric with each quadrant.
std::array<BoundingBox, 4> quadrant_boxes(int width, int height, double area_frac_each);

// Normalized heatmap that is 1 inside the baseline box(es) and 0 outside.
Heatmap baseline_heatmap(const BaselineSpec& spec, int width, int height);

}  // namespace vsl
