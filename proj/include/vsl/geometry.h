#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vsl {

// Integer pixel box with half-open extent [x, x+w) x [y, y+h).
struct BoundingBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    std::optional<std::string> label;
    std::optional<int> annotator;

    int64_t area() const { return static_cast<int64_t>(w) * h; }
    bool contains(int px, int py) const {
        return px >= x && px < x + w && py >= y && py < y + h;
    }
    double center_x() const { return x + w / 2.0; }
    double center_y() const { return y + h / 2.0; }
};

struct FrameAnnotation {
    std::string frame_id;
    int width = 0;
    int height = 0;
    std::vector<BoundingBox> boxes;
};

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> values;  // row-major, 0/1

    bool at(int px, int py) const {
        return values[static_cast<size_t>(py) * width + px] != 0;
    }
    int64_t count() const;
};

BinaryMask make_mask(int width, int height, bool fill = false);

// Throws ValidationError naming the frame and the offending field. Empty box
// lists are rejected unless allow_empty_boxes is set (unlabeled manifests).
void validate_annotation(const FrameAnnotation& ann, bool allow_empty_boxes = false);

// Pixels covered by boxes from at least min_agree distinct annotators. Boxes
// without an annotator id each count as a distinct annotator, so min_agree=1
// is the plain union of boxes. min_agree above the number of distinct
// annotators yields an empty mask (no consensus region).
BinaryMask gt_mask(const FrameAnnotation& ann, int min_agree = 1);

}  // namespace vsl
