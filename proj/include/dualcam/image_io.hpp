#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dcam::imageio {

// Row-major RGB, 3 bytes per pixel.
void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& pixels);
// Row-major 16-bit grayscale.
void write_png_gray16(const std::string& path, int width, int height,
                      const std::vector<uint16_t>& pixels);

struct ImageRgb8 {
    int width = 0, height = 0;
    std::vector<uint8_t> pixels;
};
struct ImageGray16 {
    int width = 0, height = 0;
    std::vector<uint16_t> pixels;
};

ImageRgb8 read_png_rgb8(const std::string& path);
ImageGray16 read_png_gray16(const std::string& path);

}  // namespace dcam::imageio
