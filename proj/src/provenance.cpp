#include "vsl/provenance.h"

#include <chrono>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "vsl/errors.h"
#include "vsl/version.h"

namespace vsl {

std::string config_hash(const std::map<std::string, std::string>& config) {
    uint64_t hash = 0xcbf29ce484222325ull;
    const auto mix = [&hash](const std::string& s) {
        for (unsigned char c : s) {
            hash ^= c;
            hash *= 0x100000001b3ull;
        }
    };
    for (const auto& [key, value] : config) {
        mix(key);
        mix("=");
        mix(value);
        mix(";");
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

void append_provenance(const std::filesystem::path& log_path, const std::string& command,
                       const std::map<std::string, std::string>& config,
                       std::optional<uint64_t> seed) {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = config_hash(config);
    if (seed) {
        j["seed"] = *seed;
    } else {
        j["seed"] = nullptr;
    }
    j["version"] = kVersion;
    j["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
    std::ofstream out(log_path, std::ios::app);
    if (!out) throw IoError("append_provenance: cannot open " + log_path.string());
    out << j.dump() << "\n";
}

}  // namespace vsl
