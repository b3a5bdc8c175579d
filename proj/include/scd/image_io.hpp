#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace scd {

// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;  // height * width * 3

  RgbImage() = default;
  RgbImage(int64_t h, int64_t w) : height(h), width(w), pixels(static_cast<size_t>(h * w * 3), 0) {}

  uint8_t* at(int64_t y, int64_t x) { return pixels.data() + (y * width + x) * 3; }
  const uint8_t* at(int64_t y, int64_t x) const { return pixels.data() + (y * width + x) * 3; }

  bool operator==(const RgbImage&) const = default;
};

// Grey, palette and alpha PNGs are expanded to 8-bit RGB on read.
RgbImage read_png(const std::filesystem::path& path);

// Output is byte-stable for identical input (fixed compression settings, no timestamps).
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace scd
