#include "vsl/geometry.h"

#include <algorithm>
#include <map>

#include "vsl/errors.h"
#include "vsl/kernels.h"

namespace vsl {

int64_t BinaryMask::count() const {
    return std::count_if(values.begin(), values.end(), [](uint8_t v) { return v != 0; });
}

BinaryMask make_mask(int width, int height, bool fill) {
    BinaryMask m;
    m.width = width;
    m.height = height;
    m.values.assign(static_cast<size_t>(width) * height, fill ? 1 : 0);
    return m;
}

void validate_annotation(const FrameAnnotation& ann, bool allow_empty_boxes) {
    const auto fail = [&](const std::string& field, const std::string& why) {
        throw ValidationError("frame '" + ann.frame_id + "': " + field + " " + why);
    };
    if (ann.width <= 0) fail("width", "must be positive");
    if (ann.height <= 0) fail("height", "must be positive");
    if (ann.boxes.empty() && !allow_empty_boxes) fail("boxes", "must not be empty");
    for (size_t i = 0; i < ann.boxes.size(); ++i) {
        const BoundingBox& b = ann.boxes[i];
        const std::string field = "boxes[" + std::to_string(i) + "]";
        if (b.w <= 0) fail(field + ".w", "must be positive");
        if (b.h <= 0) fail(field + ".h", "must be positive");
        if (b.x < 0) fail(field + ".x", "must be non-negative");
        if (b.y < 0) fail(field + ".y", "must be non-negative");
        if (b.x + b.w > ann.width) fail(field, "exceeds frame width");
        if (b.y + b.h > ann.height) fail(field, "exceeds frame height");
    }
}

BinaryMask gt_mask(const FrameAnnotation& ann, int min_agree) {
    if (min_agree < 1) throw ContractError("gt_mask: min_agree must be >= 1");
    if (ann.boxes.empty()) throw ContractError("gt_mask: annotation has no boxes");
    validate_annotation(ann);

    // Assign group ids: explicit annotator ids share a group, id-less boxes
    // each get their own.
    std::map<int, int32_t> by_annotator;
    std::vector<int32_t> flat;
    flat.reserve(ann.boxes.size() * 5);
    int32_t next_group = 0;
    for (const BoundingBox& b : ann.boxes) {
        int32_t group;
        if (b.annotator.has_value()) {
            auto it = by_annotator.find(*b.annotator);
            if (it == by_annotator.end()) {
                it = by_annotator.emplace(*b.annotator, next_group++).first;
            }
            group = it->second;
        } else {
            group = next_group++;
        }
        flat.insert(flat.end(), {b.x, b.y, b.w, b.h, group});
    }

    BinaryMask mask = make_mask(ann.width, ann.height);
    if (min_agree > next_group) return mask;  // no consensus possible

    std::vector<int32_t> counts(static_cast<size_t>(ann.width) * ann.height);
    kern::box_coverage(flat.data(), static_cast<int>(ann.boxes.size()),
                       ann.width, ann.height, counts.data());
    for (size_t i = 0; i < counts.size(); ++i) {
        mask.values[i] = counts[i] >= min_agree ? 1 : 0;
    }
    return mask;
}

}  // namespace vsl
