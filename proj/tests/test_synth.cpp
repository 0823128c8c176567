#include <doctest.h>

#include <fstream>

#include "vsl/audio.h"
#include "vsl/baselines.h"
#include "vsl/errors.h"
#include "vsl/image_io.h"
#include "vsl/metrics.h"
#include "vsl/synth.h"
#include "testutil.h"

using namespace vsl;
using vsltest::TempDir;

TEST_SUITE_BEGIN("synth");

TEST_CASE("quadrant scenes carry exactly two quarter-area boxes") {
    TempDir dir("synth");
    SyntheticSceneSpec spec;
    spec.kind = SyntheticSceneSpec::Kind::quadrants;
    spec.n = 10;
    spec.seed = 7;
    const auto records = synth_dataset(spec, dir.path);
    REQUIRE(records.size() == 10);
    for (const ManifestRecord& rec : records) {
        REQUIRE(rec.annotation.boxes.size() == 2);
        for (const BoundingBox& b : rec.annotation.boxes) {
            REQUIRE(b.w == 112);
            REQUIRE(b.h == 112);
            REQUIRE(b.area() * 4 == 224LL * 224LL);
            REQUIRE(b.x % 112 == 0);
            REQUIRE(b.y % 112 == 0);
        }
        REQUIRE(rec.audio_ref.has_value());
        REQUIRE(rec.audio_len_s == 1.0);
    }
    // media files exist and decode
    const ImageRgb8 img = read_png(dir.path / records[0].image_ref);
    CHECK(img.width == 224);
    CHECK(img.height == 224);
    const Waveform wave = read_wav(dir.path / *records[0].audio_ref);
    CHECK(wave.sample_rate == 16000);
    CHECK(wave.samples.size() == 16000);
}

TEST_CASE("same spec twice gives byte-identical outputs") {
    TempDir a("synth"), b("synth");
    SyntheticSceneSpec spec;
    spec.kind = SyntheticSceneSpec::Kind::quadrants;
    spec.n = 5;
    spec.seed = 123;
    synth_dataset(spec, a.path);
    synth_dataset(spec, b.path);
    CHECK(vsltest::read_file(a.path / "manifest.jsonl") ==
          vsltest::read_file(b.path / "manifest.jsonl"));
    CHECK(vsltest::read_file(a.path / "images" / "quad_0002.png") ==
          vsltest::read_file(b.path / "images" / "quad_0002.png"));
    CHECK(vsltest::read_file(a.path / "audio" / "quad_0004.wav") ==
          vsltest::read_file(b.path / "audio" / "quad_0004.wav"));
}

TEST_CASE("different seeds give different scene layouts") {
    TempDir a("synth"), b("synth");
    SyntheticSceneSpec spec;
    spec.n = 6;
    spec.seed = 1;
    synth_dataset(spec, a.path);
    spec.seed = 2;
    synth_dataset(spec, b.path);
    CHECK(vsltest::read_file(a.path / "manifest.jsonl") !=
          vsltest::read_file(b.path / "manifest.jsonl"));
}

TEST_CASE("centered scenes with a fixed 0.5 area match the center baseline exactly") {
    TempDir dir("synth");
    SyntheticSceneSpec spec;
    spec.kind = SyntheticSceneSpec::Kind::centered;
    spec.n = 6;
    spec.seed = 3;
    spec.area_min = 0.5;
    spec.area_max = 0.5;
    const auto records = synth_dataset(spec, dir.path);

    const BoundingBox want = center_box(224, 224, 0.5);
    BaselineSpec baseline;
    baseline.kind = BaselineKind::center;
    baseline.area_frac = 0.5;
    const Heatmap pred = baseline_heatmap(baseline, 224, 224);
    EvalConfig cfg;
    for (const ManifestRecord& rec : records) {
        REQUIRE(rec.annotation.boxes.size() == 1);
        const BoundingBox& b = rec.annotation.boxes[0];
        CHECK(b.x == want.x);
        CHECK(b.y == want.y);
        CHECK(b.w == want.w);
        CHECK(b.h == want.h);
        CHECK(ciou_frame(pred, rec.annotation, cfg) == 1.0);
    }
}

TEST_CASE("centered scenes draw areas from the configured range") {
    TempDir dir("synth");
    SyntheticSceneSpec spec;
    spec.kind = SyntheticSceneSpec::Kind::centered;
    spec.n = 20;
    spec.seed = 4;
    spec.area_min = 0.2;
    spec.area_max = 0.8;
    const auto records = synth_dataset(spec, dir.path);
    bool varied = false;
    int64_t first_area = records[0].annotation.boxes[0].area();
    for (const ManifestRecord& rec : records) {
        const BoundingBox& b = rec.annotation.boxes[0];
        const double frac = static_cast<double>(b.area()) / (224.0 * 224.0);
        REQUIRE(frac > 0.15);
        REQUIRE(frac < 0.85);
        if (b.area() != first_area) varied = true;
    }
    CHECK(varied);
}

TEST_CASE("synth rejects bad specs and unwritable outputs") {
    TempDir dir("synth");
    SyntheticSceneSpec spec;
    spec.n = 0;
    CHECK_THROWS_AS(synth_dataset(spec, dir.path), ConfigError);
    spec.n = 1;
    spec.image_size = 7;
    CHECK_THROWS_AS(synth_dataset(spec, dir.path), ConfigError);

    spec = SyntheticSceneSpec{};
    const auto file_path = dir.path / "blocker";
    std::ofstream(file_path) << "not a directory";
    CHECK_THROWS_AS(synth_dataset(spec, file_path / "sub"), IoError);
}

TEST_SUITE_END();
