#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dupscan/geometry.h"

namespace dupscan {

// Row-major single-channel float image. Intensities are nominally in [0,1]
// (0 = ink, 1 = paper for manuscript copies).
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, float fill = 0.0f);
  GrayImage(int width, int height, std::vector<float> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  float at(int x, int y) const { return pixels_[static_cast<size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return pixels_[static_cast<size_t>(y) * width_ + x]; }

  // Clamp-to-edge lookup.
  float clamped(int x, int y) const;
  // Bilinear sample with clamp-to-edge borders; pixel centers at integers.
  float bilinear(double x, double y) const;

  std::span<const float> pixels() const { return pixels_; }
  std::span<float> pixels() { return pixels_; }
  const float* row(int y) const { return pixels_.data() + static_cast<size_t>(y) * width_; }
  float* row(int y) { return pixels_.data() + static_cast<size_t>(y) * width_; }

  bool operator==(const GrayImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

// Rounds intensities to the nearest 8-bit level, value/255.
uint8_t quantize_u8(float v);
float dequantize_u8(uint8_t v);
// Snaps every pixel to an exactly representable 8-bit level so that a PNG
// write/read round trip reproduces the image bit-for-bit.
void quantize_in_place(GrayImage& image);

// Reads an 8-bit PNG. Color images are converted by averaging R, G and B.
GrayImage read_png(const std::filesystem::path& path);
void write_png(const GrayImage& image, const std::filesystem::path& path);
std::vector<uint8_t> encode_png(const GrayImage& image);

// Bilinear resampling of the rectangle (x, y, w, h) onto an out_w x out_h
// grid, sampling at cell centers.
GrayImage resample_rect(const GrayImage& image, double x, double y, double w, double h, int out_w, int out_h);

// As resample_rect, but the rectangle lives in another frame: each sample
// point (pixel-index coordinates) is mapped through `to_image` first.
GrayImage resample_warped(const GrayImage& image, const Affine2D& to_image, double x, double y, double w, double h,
                          int out_w, int out_h);

}  // namespace dupscan
