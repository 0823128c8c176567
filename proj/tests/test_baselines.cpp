#include <doctest.h>

#include <cmath>

#include "vsl/baselines.h"
#include "vsl/errors.h"
#include "vsl/metrics.h"
#include "vsl/rng.h"

using namespace vsl;

TEST_SUITE_BEGIN("baselines");

TEST_CASE("center box closed-form cases") {
    const BoundingBox full = center_box(224, 224, 1.0);
    CHECK(full.x == 0);
    CHECK(full.y == 0);
    CHECK(full.w == 224);
    CHECK(full.h == 224);

    // 224 * sqrt(0.5) = 158.39 -> 158; offset (224-158)/2 = 33
    const BoundingBox half = center_box(224, 224, 0.5);
    CHECK(half.w == 158);
    CHECK(half.h == 158);
    CHECK(half.x == 33);
    CHECK(half.y == 33);

    // non-square frame: w = round(70.71) = 71, h = round(35.36) = 35,
    // x = round(14.5) = 15 (offsets round half-up), y = round(7.5) = 8
    const BoundingBox rect = center_box(100, 50, 0.5);
    CHECK(rect.w == 71);
    CHECK(rect.h == 35);
    CHECK(rect.x == 15);
    CHECK(rect.y == 8);

    CHECK_THROWS_AS(center_box(10, 10, 0.0), ContractError);
    CHECK_THROWS_AS(center_box(10, 10, 1.5), ContractError);
}

TEST_CASE("center box square option") {
    const BoundingBox sq = center_box(100, 50, 0.5, /*square=*/true);
    CHECK(sq.w == sq.h);
    CHECK(sq.w == 50);  // sqrt(0.5*100*50) = 50
}

TEST_CASE("quadrant boxes closed-form cases") {
    // each box w = h = round(224/sqrt(8)) = 79, concentric with its quadrant
    const auto boxes = quadrant_boxes(224, 224, 1.0 / 8.0);
    const double centers[4][2] = {{56, 56}, {168, 56}, {56, 168}, {168, 168}};
    for (int i = 0; i < 4; ++i) {
        CHECK(boxes[i].w == 79);
        CHECK(boxes[i].h == 79);
        CHECK(std::abs(boxes[i].x + boxes[i].w / 2.0 - centers[i][0]) <= 0.5);
        CHECK(std::abs(boxes[i].y + boxes[i].h / 2.0 - centers[i][1]) <= 0.5);
    }
    CHECK(boxes[0].x == 17);  // lround(56 - 39.5)
    CHECK(boxes[1].x == 129);

    // boundary: each box exactly fills its 112x112 quadrant
    const auto filling = quadrant_boxes(224, 224, 0.25);
    CHECK(filling[0].x == 0);
    CHECK(filling[0].y == 0);
    CHECK(filling[0].w == 112);
    CHECK(filling[3].x == 112);
    CHECK(filling[3].y == 112);

    // degenerate 2x2 frame: four 1x1 boxes, one per pixel
    const auto tiny = quadrant_boxes(2, 2, 0.25);
    bool seen[2][2] = {};
    for (const BoundingBox& b : tiny) {
        CHECK(b.w == 1);
        CHECK(b.h == 1);
        seen[b.y][b.x] = true;
    }
    CHECK(seen[0][0]);
    CHECK(seen[0][1]);
    CHECK(seen[1][0]);
    CHECK(seen[1][1]);

    CHECK_THROWS_AS(quadrant_boxes(224, 224, 0.3), ContractError);
}

TEST_CASE("quadrant boxes are pairwise disjoint below the boundary fraction") {
    Rng rng(3);
    for (int iter = 0; iter < 30; ++iter) {
        const int w = 16 + static_cast<int>(rng.below(300));
        const int h = 16 + static_cast<int>(rng.below(300));
        const double frac = rng.uniform(0.01, 0.2499);
        const auto boxes = quadrant_boxes(w, h, frac);
        for (int i = 0; i < 4; ++i) {
            for (int j = i + 1; j < 4; ++j) {
                const bool overlap_x = boxes[i].x < boxes[j].x + boxes[j].w &&
                                       boxes[j].x < boxes[i].x + boxes[i].w;
                const bool overlap_y = boxes[i].y < boxes[j].y + boxes[j].h &&
                                       boxes[j].y < boxes[i].y + boxes[i].h;
                REQUIRE(!(overlap_x && overlap_y));
            }
        }
    }
}

TEST_CASE("rasterized area stays within the rounding tolerance") {
    Rng rng(4);
    for (int iter = 0; iter < 50; ++iter) {
        const int w = 10 + static_cast<int>(rng.below(400));
        const int h = 10 + static_cast<int>(rng.below(400));
        const double frac = rng.uniform(0.05, 1.0);
        const BoundingBox b = center_box(w, h, frac);
        const double target = frac * w * h;
        REQUIRE(std::abs(static_cast<double>(b.area()) - target) <=
                static_cast<double>(b.w + b.h));
    }
}

TEST_CASE("baseline heatmap binarizes back to the center box") {
    BaselineSpec spec;
    spec.kind = BaselineKind::center;
    spec.area_frac = 0.5;
    const Heatmap h = baseline_heatmap(spec, 224, 224);
    CHECK(h.normalized);
    CHECK(heatmap_invariants_ok(h));
    const BinaryMask mask = binarize(h, 0.5f);
    const BoundingBox box = center_box(224, 224, 0.5);
    CHECK(mask.count() == box.area());
    for (int y = 0; y < 224; ++y) {
        for (int x = 0; x < 224; ++x) {
            REQUIRE(mask.at(x, y) == box.contains(x, y));
        }
    }
}

TEST_CASE("baseline heatmaps are deterministic") {
    BaselineSpec spec;
    spec.kind = BaselineKind::quadrants;
    spec.area_frac = 0.125;
    const Heatmap a = baseline_heatmap(spec, 224, 224);
    const Heatmap b = baseline_heatmap(spec, 224, 224);
    CHECK(a.values == b.values);
}

TEST_CASE("full-frame center baseline degenerates to the all-zero map") {
    BaselineSpec spec;
    spec.kind = BaselineKind::center;
    spec.area_frac = 1.0;
    const Heatmap h = baseline_heatmap(spec, 32, 32);
    CHECK(heatmap_invariants_ok(h));
    for (float v : h.values) REQUIRE(v == 0.0f);
}

TEST_CASE("quadrant baseline scores 1/3 against two sounding quadrants") {
    // synthetic quadrant ground truth: two full quadrants of a 224 frame
    FrameAnnotation ann{"q", 224, 224, {}};
    ann.boxes.push_back(BoundingBox{0, 0, 112, 112});
    ann.boxes.push_back(BoundingBox{112, 112, 112, 112});

    BaselineSpec spec;
    spec.kind = BaselineKind::quadrants;
    spec.area_frac = 0.125;
    const Heatmap pred = baseline_heatmap(spec, 224, 224);

    EvalConfig cfg;
    cfg.ciou_threshold = 0.3;
    const double ciou = ciou_frame(pred, ann, cfg);
    CHECK(ciou == doctest::Approx(1.0 / 3.0).epsilon(0.06));  // rasterization slack
    CHECK(std::abs(ciou - 1.0 / 3.0) < 0.02);
    CHECK(ciou >= 0.3);
}

TEST_CASE("center baseline scores 1.0 against its own box") {
    FrameAnnotation ann{"c", 224, 224, {center_box(224, 224, 0.5)}};
    BaselineSpec spec;
    spec.kind = BaselineKind::center;
    spec.area_frac = 0.5;
    EvalConfig cfg;
    CHECK(ciou_frame(baseline_heatmap(spec, 224, 224), ann, cfg) == 1.0);
}

TEST_CASE("spec validation") {
    BaselineSpec spec;
    spec.kind = BaselineKind::quadrants;
    spec.area_frac = 0.5;
    CHECK_THROWS_AS(validate_spec(spec), ConfigError);
    spec.area_frac = 0.125;
    CHECK_NOTHROW(validate_spec(spec));
}

TEST_SUITE_END();
