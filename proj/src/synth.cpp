#include "vsl/synth.h"

#include <cmath>
#include <cstdio>

#include "vsl/audio.h"
#include "vsl/baselines.h"
#include "vsl/errors.h"
#include "vsl/image_io.h"
#include "vsl/rng.h"

namespace vsl {

namespace {

constexpr int kSampleRate = 16000;
constexpr double kAudioLenS = 1.0;

double tone_hz(int tile_class) { return 320.0 + 180.0 * tile_class; }

// Distinct texture per tile class, phase-jittered per scene.
double texture(int tile_class, int x, int y, double phase) {
    switch (tile_class) {
        case 0:  // horizontal grating
            return 0.5 + 0.5 * std::sin(2.0 * M_PI * y / 14.0 + phase);
        case 1:  // vertical grating
            return 0.5 + 0.5 * std::sin(2.0 * M_PI * x / 14.0 + phase);
        case 2:  // checkerboard
            return ((x / 12 + y / 12) % 2 == 0) ? 0.85 : 0.15;
        default:  // diagonal grating
            return 0.5 + 0.5 * std::sin(2.0 * M_PI * (x + y) / 20.0 + phase);
    }
}

// class tint so tiles differ in color as well as pattern
void tile_color(int tile_class, double v, uint8_t* out) {
    static const double tints[4][3] = {
        {1.0, 0.45, 0.35}, {0.35, 1.0, 0.45}, {0.4, 0.55, 1.0}, {1.0, 0.95, 0.35}};
    for (int c = 0; c < 3; ++c) {
        out[c] = static_cast<uint8_t>(std::lround(255.0 * v * tints[tile_class][c]));
    }
}

void paint_tile(ImageRgb8& image, int x0, int y0, int x1, int y1, int tile_class,
                double phase) {
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const double v = texture(tile_class, x - x0, y - y0, phase);
            tile_color(tile_class, v,
                       image.pixels.data() + (static_cast<size_t>(y) * image.width + x) * 3);
        }
    }
}

Waveform render_tones(const std::vector<int>& classes) {
    Waveform wave;
    wave.sample_rate = kSampleRate;
    const int n = static_cast<int>(kSampleRate * kAudioLenS);
    wave.samples.assign(n, 0.0f);
    const double amp = 0.9 / static_cast<double>(classes.size());
    for (int tile_class : classes) {
        const double f = tone_hz(tile_class);
        for (int i = 0; i < n; ++i) {
            wave.samples[i] +=
                static_cast<float>(amp * std::sin(2.0 * M_PI * f * i / kSampleRate));
        }
    }
    return wave;
}

std::string frame_name(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d", prefix, i);
    return buf;
}

}  // namespace

std::vector<ManifestRecord> synth_dataset(const SyntheticSceneSpec& spec,
                                          const std::filesystem::path& out_dir) {
    if (spec.n < 1) throw ConfigError("synth: n must be >= 1");
    if (spec.image_size < 8 || spec.image_size % 2 != 0) {
        throw ConfigError("synth: image_size must be even and >= 8");
    }
    if (spec.kind == SyntheticSceneSpec::Kind::centered &&
        !(spec.area_min > 0.0 && spec.area_min <= spec.area_max && spec.area_max <= 1.0)) {
        throw ConfigError("synth: need 0 < area_min <= area_max <= 1");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    std::filesystem::create_directories(out_dir / "audio", ec);
    if (!std::filesystem::is_directory(out_dir / "images") ||
        !std::filesystem::is_directory(out_dir / "audio")) {
        throw IoError("synth: cannot create output directories under " + out_dir.string());
    }

    Rng rng(spec.seed);
    const int size = spec.image_size;
    const int half = size / 2;
    std::vector<ManifestRecord> records;
    records.reserve(spec.n);

    for (int i = 0; i < spec.n; ++i) {
        ImageRgb8 image;
        image.width = size;
        image.height = size;
        image.pixels.assign(static_cast<size_t>(size) * size * 3, 0);

        ManifestRecord rec;
        rec.annotation.width = size;
        rec.annotation.height = size;
        rec.audio_offset_s = 0.0;
        rec.audio_len_s = kAudioLenS;

        Waveform wave;
        if (spec.kind == SyntheticSceneSpec::Kind::quadrants) {
            rec.frame_id = frame_name("quad", i);
            rec.dataset_id = "synth-quadrants";

            std::vector<int> classes = {0, 1, 2, 3};
            rng.shuffle(classes);
            // two sounding quadrants, uniform over the six pairs
            const int pair = static_cast<int>(rng.below(6));
            static const int pairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
            const double phase = rng.uniform(0.0, 2.0 * M_PI);

            std::vector<int> sounding;
            for (int q = 0; q < 4; ++q) {
                const int qx = q % 2, qy = q / 2;
                paint_tile(image, qx * half, qy * half, (qx + 1) * half, (qy + 1) * half,
                           classes[q], phase);
            }
            for (int s = 0; s < 2; ++s) {
                const int q = pairs[pair][s];
                const int qx = q % 2, qy = q / 2;
                BoundingBox box;
                box.x = qx * half;
                box.y = qy * half;
                box.w = half;
                box.h = half;
                box.label = "tile" + std::to_string(classes[q]);
                rec.annotation.boxes.push_back(box);
                sounding.push_back(classes[q]);
            }
            wave = render_tones(sounding);
        } else {
            rec.frame_id = frame_name("center", i);
            rec.dataset_id = "synth-centered";

            const double frac = spec.area_min == spec.area_max
                                    ? spec.area_min
                                    : rng.uniform(spec.area_min, spec.area_max);
            const int tile_class = static_cast<int>(rng.below(4));
            const int bg_class = (tile_class + 2) % 4;
            const double phase = rng.uniform(0.0, 2.0 * M_PI);
            const BoundingBox box = center_box(size, size, frac);

            paint_tile(image, 0, 0, size, size, bg_class, phase + 1.3);
            paint_tile(image, box.x, box.y, box.x + box.w, box.y + box.h, tile_class, phase);
            BoundingBox annotated = box;
            annotated.label = "tile" + std::to_string(tile_class);
            rec.annotation.boxes.push_back(annotated);
            wave = render_tones({tile_class});
        }

        rec.annotation.frame_id = rec.frame_id;
        rec.image_ref = "images/" + rec.frame_id + ".png";
        rec.audio_ref = "audio/" + rec.frame_id + ".wav";
        write_png(image, out_dir / rec.image_ref);
        write_wav(wave, out_dir / *rec.audio_ref);
        records.push_back(std::move(rec));
    }

    write_manifest(records, out_dir / "manifest.jsonl");
    return records;
}

}  // namespace vsl
