#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "vsl/encoders.h"
#include "vsl/tensor.h"

namespace vsl {

// Checkpoint container: magic "VSLC", u32-LE format version, u32-LE header
// length, JSON header (architecture config), u32-LE tensor count, then per
// tensor: u32-LE name length, name bytes, u32-LE ndim, u32-LE dims, f32-LE
// values. Weights are stored as 32-bit floats.
struct Checkpoint {
    EncoderConfig config;
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_model(const ToyModel& model, const std::filesystem::path& path);
ToyModel load_model(const std::filesystem::path& path);

}  // namespace vsl
