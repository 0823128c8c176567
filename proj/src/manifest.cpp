#include "vsl/manifest.h"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vsl/errors.h"

namespace vsl {

using nlohmann::json;

namespace {

ManifestRecord parse_record(const json& j, int line_no) {
    const auto ctx = [&](const std::string& what) {
        return "manifest line " + std::to_string(line_no) + ": " + what;
    };
    ManifestRecord r;
    try {
        r.frame_id = j.at("frame_id").get<std::string>();
        r.image_ref = j.at("image").get<std::string>();
        if (j.contains("audio") && !j["audio"].is_null()) {
            r.audio_ref = j["audio"].get<std::string>();
        }
        r.audio_offset_s = j.value("audio_offset_s", 0.0);
        r.audio_len_s = j.value("audio_len_s", 0.0);
        r.annotation.frame_id = r.frame_id;
        r.annotation.width = j.at("width").get<int>();
        r.annotation.height = j.at("height").get<int>();
        for (const json& jb : j.value("boxes", json::array())) {
            BoundingBox b;
            b.x = jb.at("x").get<int>();
            b.y = jb.at("y").get<int>();
            b.w = jb.at("w").get<int>();
            b.h = jb.at("h").get<int>();
            if (jb.contains("label") && !jb["label"].is_null()) {
                b.label = jb["label"].get<std::string>();
            }
            if (jb.contains("annotator") && !jb["annotator"].is_null()) {
                b.annotator = jb["annotator"].get<int>();
            }
            r.annotation.boxes.push_back(std::move(b));
        }
        r.dataset_id = j.value("dataset", std::string{});
        if (j.contains("text_label") && !j["text_label"].is_null()) {
            r.text_label = j["text_label"].get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ParseError(ctx(e.what()));
    }
    return r;
}

}  // namespace

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path,
                                          bool allow_unlabeled) {
    std::ifstream in(path);
    if (!in) throw IoError("load_manifest: cannot open " + path.string());

    std::vector<ManifestRecord> records;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw ParseError("manifest line " + std::to_string(line_no) + ": not a JSON object");
        }
        ManifestRecord r = parse_record(j, line_no);
        if (!seen_ids.insert(r.frame_id).second) {
            throw ValidationError("frame '" + r.frame_id + "': frame_id duplicated in manifest");
        }
        if (r.audio_ref.has_value() && !(r.audio_len_s > 0.0)) {
            throw ValidationError("frame '" + r.frame_id +
                                  "': audio_len_s must be positive when audio is present");
        }
        validate_annotation(r.annotation, allow_unlabeled);
        records.push_back(std::move(r));
    }
    return records;
}

void write_manifest(const std::vector<ManifestRecord>& records,
                    const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_manifest: cannot open " + path.string());
    for (const ManifestRecord& r : records) {
        json j;
        j["frame_id"] = r.frame_id;
        j["image"] = r.image_ref;
        if (r.audio_ref) {
            j["audio"] = *r.audio_ref;
            j["audio_offset_s"] = r.audio_offset_s;
            j["audio_len_s"] = r.audio_len_s;
        }
        j["width"] = r.annotation.width;
        j["height"] = r.annotation.height;
        json boxes = json::array();
        for (const BoundingBox& b : r.annotation.boxes) {
            json jb{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
            if (b.label) jb["label"] = *b.label;
            if (b.annotator) jb["annotator"] = *b.annotator;
            boxes.push_back(std::move(jb));
        }
        j["boxes"] = std::move(boxes);
        j["dataset"] = r.dataset_id;
        if (r.text_label) j["text_label"] = *r.text_label;
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("write_manifest: short write to " + path.string());
}

std::filesystem::path resolve_ref(const std::filesystem::path& manifest_path,
                                  const std::string& ref) {
    std::filesystem::path p(ref);
    if (p.is_absolute()) return p;
    return manifest_path.parent_path() / p;
}

}  // namespace vsl
