#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace vsl {

// One JSON line per run: the command, a hash of the effective configuration,
// the seed when one applies, and the toolkit version. Appended, never
// truncated, so every emitted number can be traced back to its run.
void append_provenance(const std::filesystem::path& log_path, const std::string& command,
                       const std::map<std::string, std::string>& config,
                       std::optional<uint64_t> seed);

// FNV-1a over the canonical "key=value;" expansion of the config.
std::string config_hash(const std::map<std::string, std::string>& config);

}  // namespace vsl
