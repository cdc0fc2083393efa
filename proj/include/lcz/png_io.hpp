#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lcz {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 3 bytes per pixel, row-major
};

// 8-bit RGB PNG, written with per-scanline filter 0 and a fixed compression
// level so identical images produce identical bytes.
void write_png_rgb8(const std::string& path, const RgbImage& image);

// Reads 8-bit non-interlaced truecolor PNGs (all five scanline filters).
RgbImage read_png_rgb8(const std::string& path);

}  // namespace lcz
