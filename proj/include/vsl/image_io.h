#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vsl/tensor.h"

namespace vsl {

struct ImageRgb8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // row-major RGB triples
};

ImageRgb8 read_png(const std::filesystem::path& path);
void write_png(const ImageRgb8& image, const std::filesystem::path& path);

// [3,H,W] float image in [0,1] <-> 8-bit RGB
Tensor image_to_tensor(const ImageRgb8& image);
ImageRgb8 tensor_to_image(const Tensor& t);

}  // namespace vsl
