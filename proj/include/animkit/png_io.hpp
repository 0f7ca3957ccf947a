#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace animkit {

// Minimal 8-bit RGB PNG codec (zlib for the IDAT stream). Encoding always
// emits filter type 0 rows at a fixed compression level, so output bytes are
// deterministic for identical pixels.
struct RgbImage {
    int width = 0, height = 0;
    std::vector<uint8_t> pixels;  // row-major RGB, 3 bytes per pixel
};

void write_png(const std::string& path, const RgbImage& img);
RgbImage read_png(const std::string& path);

}  // namespace animkit
