#include "vsl/image_io.h"

#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "vsl/errors.h"

namespace vsl {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

ImageRgb8 read_png(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("read_png: cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("read_png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("read_png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("read_png: " + path.string() + " is not a valid PNG");
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    ImageRgb8 image;
    image.width = static_cast<int>(png_get_image_width(png, info));
    image.height = static_cast<int>(png_get_image_height(png, info));
    image.pixels.resize(static_cast<size_t>(image.width) * image.height * 3);

    std::vector<png_bytep> rows(image.height);
    for (int y = 0; y < image.height; ++y) {
        rows[y] = image.pixels.data() + static_cast<size_t>(y) * image.width * 3;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_png(const ImageRgb8& image, const std::filesystem::path& path) {
    if (image.pixels.size() != static_cast<size_t>(image.width) * image.height * 3) {
        throw ContractError("write_png: pixel buffer does not match dims");
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("write_png: cannot open " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("write_png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("write_png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: failed writing " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(image.height);
    std::vector<uint8_t> buf(image.pixels);
    for (int y = 0; y < image.height; ++y) {
        rows[y] = buf.data() + static_cast<size_t>(y) * image.width * 3;
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor image_to_tensor(const ImageRgb8& image) {
    Tensor t({3, image.height, image.width});
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const size_t p = (static_cast<size_t>(y) * image.width + x) * 3;
            for (int c = 0; c < 3; ++c) {
                t.at3(c, y, x) = image.pixels[p + c] / 255.0;
            }
        }
    }
    return t;
}

ImageRgb8 tensor_to_image(const Tensor& t) {
    ImageRgb8 image;
    image.height = t.shape[1];
    image.width = t.shape[2];
    image.pixels.resize(static_cast<size_t>(image.width) * image.height * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const size_t p = (static_cast<size_t>(y) * image.width + x) * 3;
            for (int c = 0; c < 3; ++c) {
                double v = t.at3(c, y, x);
                if (v < 0.0) v = 0.0;
                if (v > 1.0) v = 1.0;
                image.pixels[p + c] = static_cast<uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return image;
}

}  // namespace vsl
