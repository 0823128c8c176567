#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vsl/geometry.h"

namespace vsl {

// One evaluation sample: an image, optional audio (by reference, with a
// window into it), and the ground-truth annotation.
struct ManifestRecord {
    std::string frame_id;
    std::string image_ref;
    std::optional<std::string> audio_ref;
    double audio_offset_s = 0.0;
    double audio_len_s = 0.0;
    FrameAnnotation annotation;
    std::string dataset_id;
    std::optional<std::string> text_label;
};

// JSON-Lines manifest, one record per line. Malformed lines raise ParseError
// carrying the line number; invariant violations raise ValidationError naming
// the frame and field. Record order is preserved.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path,
                                          bool allow_unlabeled = false);

void write_manifest(const std::vector<ManifestRecord>& records,
                    const std::filesystem::path& path);

// Paths inside a manifest are resolved against the manifest's directory
// unless absolute.
std::filesystem::path resolve_ref(const std::filesystem::path& manifest_path,
                                  const std::string& ref);

}  // namespace vsl
