#include "dualcam/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "dualcam/errors.hpp"

namespace dcam::imageio {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

static void write_png(const std::string& path, int width, int height, int color_type,
                      int bit_depth, const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png writer setup failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);  // rows are native little-endian
    png_write_image(png, const_cast<png_bytep*>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& pixels) {
    if (pixels.size() != static_cast<size_t>(width) * height * 3)
        throw ShapeError("rgb8 pixel buffer size mismatch");
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(pixels.data() + static_cast<size_t>(y) * width * 3);
    write_png(path, width, height, PNG_COLOR_TYPE_RGB, 8, rows);
}

void write_png_gray16(const std::string& path, int width, int height,
                      const std::vector<uint16_t>& pixels) {
    if (pixels.size() != static_cast<size_t>(width) * height)
        throw ShapeError("gray16 pixel buffer size mismatch");
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(
            reinterpret_cast<const uint8_t*>(pixels.data() + static_cast<size_t>(y) * width));
    write_png(path, width, height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

ImageRgb8 read_png_rgb8(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open image: " + path);
    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    r.info = r.png ? png_create_info_struct(r.png) : nullptr;
    if (!r.png || !r.info) throw IoError("png reader setup failed for " + path);
    if (setjmp(png_jmpbuf(r.png))) throw IoError("png read failed: " + path);
    png_init_io(r.png, fp.get());
    png_read_info(r.png, r.info);
    png_set_expand(r.png);
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);

    ImageRgb8 img;
    img.width = static_cast<int>(png_get_image_width(r.png, r.info));
    img.height = static_cast<int>(png_get_image_height(r.png, r.info));
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = img.pixels.data() + static_cast<size_t>(y) * img.width * 3;
    png_read_image(r.png, rows.data());
    return img;
}

ImageGray16 read_png_gray16(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open image: " + path);
    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    r.info = r.png ? png_create_info_struct(r.png) : nullptr;
    if (!r.png || !r.info) throw IoError("png reader setup failed for " + path);
    if (setjmp(png_jmpbuf(r.png))) throw IoError("png read failed: " + path);
    png_init_io(r.png, fp.get());
    png_read_info(r.png, r.info);
    if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(r.png, r.info) != 16)
        throw IoError("expected 16-bit grayscale png: " + path);
    png_set_swap(r.png);
    png_read_update_info(r.png, r.info);

    ImageGray16 img;
    img.width = static_cast<int>(png_get_image_width(r.png, r.info));
    img.height = static_cast<int>(png_get_image_height(r.png, r.info));
    img.pixels.resize(static_cast<size_t>(img.width) * img.height);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = reinterpret_cast<uint8_t*>(
            img.pixels.data() + static_cast<size_t>(y) * img.width);
    png_read_image(r.png, rows.data());
    return img;
}

}  // namespace dcam::imageio
