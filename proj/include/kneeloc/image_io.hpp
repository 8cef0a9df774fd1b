#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "kneeloc/image.hpp"

namespace kneeloc {

// Reads 8/16-bit grayscale PNG or PGM (P2/P5), chosen by file content.
// Intensities are normalized to [0, 1]. Throws IoError.
Image read_image(const std::filesystem::path& path);

// Writes an 8-bit grayscale PNG, rescaling [min, max] to [0, 255]. A constant
// image is written as its value clamped to [0, 1] and scaled by 255.
void write_png(const Image& img, const std::filesystem::path& path);

// Writes a binary 16-bit PGM of intensities clamped to [0, 1]; lossless enough
// for round-tripping synthetic data.
void write_pgm16(const Image& img, const std::filesystem::path& path);

// 16-bit grayscale PNG of intensities clamped to [0, 1].
void write_png16(const Image& img, const std::filesystem::path& path);

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

using Rgb = std::array<std::uint8_t, 3>;

// Gray to RGB with the same [min, max] rescale as write_png.
RgbImage to_rgb(const Image& img);
// Line between pixel positions (column, row), clipped to the image.
void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, Rgb color);
void write_png(const RgbImage& img, const std::filesystem::path& path);

}  // namespace kneeloc
