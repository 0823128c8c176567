#include "vsl/baselines.h"

#include <cmath>

#include "vsl/errors.h"
#include "vsl/metrics.h"

namespace vsl {

namespace {

// round half-to-even
int round_even(double v) { return static_cast<int>(std::nearbyint(v)); }

// round half away from zero
int round_half_up(double v) { return static_cast<int>(std::lround(v)); }

void paint_box(Heatmap& h, const BoundingBox& b) {
    for (int y = b.y; y < b.y + b.h; ++y) {
        for (int x = b.x; x < b.x + b.w; ++x) {
            h.at(x, y) = 1.0f;
        }
    }
}

}  // namespace

void validate_spec(const BaselineSpec& spec) {
    if (spec.kind == BaselineKind::center) {
        if (!(spec.area_frac > 0.0 && spec.area_frac <= 1.0)) {
            throw ConfigError("center baseline: area_frac must be in (0,1]");
        }
    } else {
        if (!(spec.area_frac > 0.0 && spec.area_frac <= 0.25)) {
            throw ConfigError("quadrant baseline: area_frac must be in (0,0.25]");
        }
    }
}

BoundingBox center_box(int width, int height, double area_frac, bool square) {
    if (!(area_frac > 0.0 && area_frac <= 1.0)) {
        throw ContractError("center_box: area_frac must be in (0,1]");
    }
    BoundingBox b;
    if (square) {
        const int side = round_even(std::sqrt(area_frac * width * height));
        b.w = side;
        b.h = side;
    } else {
        const double scale = std::sqrt(area_frac);
        b.w = round_even(width * scale);
        b.h = round_even(height * scale);
    }
    if (b.w < 1) b.w = 1;
    if (b.h < 1) b.h = 1;
    if (b.w > width) b.w = width;
    if (b.h > height) b.h = height;
    b.x = round_half_up((width - b.w) / 2.0);
    b.y = round_half_up((height - b.h) / 2.0);
    return b;
}

std::array<BoundingBox, 4> quadrant_boxes(int width, int height, double area_frac_each) {
    if (!(area_frac_each > 0.0 && area_frac_each <= 0.25)) {
        throw ContractError("quadrant_boxes: area_frac_each must be in (0,0.25]");
    }
    const double scale = std::sqrt(area_frac_each);
    int w = round_even(width * scale);
    int h = round_even(height * scale);
    if (w < 1) w = 1;
    if (h < 1) h = 1;
    std::array<BoundingBox, 4> boxes;
    int i = 0;
    for (int qy = 0; qy < 2; ++qy) {
        for (int qx = 0; qx < 2; ++qx) {
            const double cx = (2 * qx + 1) * width / 4.0;
            const double cy = (2 * qy + 1) * height / 4.0;
            BoundingBox b;
            b.w = w;
            b.h = h;
            b.x = round_half_up(cx - w / 2.0);
            b.y = round_half_up(cy - h / 2.0);
            if (b.x < 0) b.x = 0;
            if (b.y < 0) b.y = 0;
            if (b.x + b.w > width) b.x = width - b.w;
            if (b.y + b.h > height) b.y = height - b.h;
            boxes[i++] = b;
        }
    }
    return boxes;
}

Heatmap baseline_heatmap(const BaselineSpec& spec, int width, int height) {
    validate_spec(spec);
    Heatmap h = make_heatmap(width, height, 0.0f);
    if (spec.kind == BaselineKind::center) {
        paint_box(h, center_box(width, height, spec.area_frac, spec.square));
    } else {
        for (const BoundingBox& b : quadrant_boxes(width, height, spec.area_frac)) {
            paint_box(h, b);
        }
    }
    // a box covering the whole frame degenerates to the all-zero map
    return minmax_normalize(h);
}

}  // namespace vsl
