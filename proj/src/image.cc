#include "dupscan/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dupscan/errors.h"

namespace dupscan {

GrayImage::GrayImage(int width, int height, float fill)
    : width_(width), height_(height),
      pixels_(static_cast<size_t>(std::max(width, 0)) * std::max(height, 0), fill) {}

GrayImage::GrayImage(int width, int height, std::vector<float> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 0 || height < 0 ||
      pixels_.size() != static_cast<size_t>(width) * static_cast<size_t>(height)) {
    throw std::invalid_argument("GrayImage: pixel count does not match dimensions");
  }
}

float GrayImage::clamped(int x, int y) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y);
}

float GrayImage::bilinear(double x, double y) const {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  const double top = (1.0 - ax) * clamped(x0, y0) + ax * clamped(x0 + 1, y0);
  const double bottom = (1.0 - ax) * clamped(x0, y0 + 1) + ax * clamped(x0 + 1, y0 + 1);
  return static_cast<float>((1.0 - ay) * top + ay * bottom);
}

uint8_t quantize_u8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

float dequantize_u8(uint8_t v) { return static_cast<float>(v) / 255.0f; }

void quantize_in_place(GrayImage& image) {
  for (float& p : image.pixels()) p = dequantize_u8(quantize_u8(p));
}

namespace {

std::vector<uint8_t> to_bytes(const GrayImage& image) {
  std::vector<uint8_t> bytes(image.pixels().size());
  std::transform(image.pixels().begin(), image.pixels().end(), bytes.begin(), quantize_u8);
  return bytes;
}

png_image make_png_header(const GrayImage& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_GRAY;
  return png;
}

}  // namespace

GrayImage read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("image file not found: " + path.string());
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw DataError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  const int w = static_cast<int>(png.width);
  const int h = static_cast<int>(png.height);
  std::vector<float> pixels(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < pixels.size(); ++i) {
    if (channels == 1) {
      pixels[i] = dequantize_u8(buffer[i]);
    } else {
      const int sum = buffer[3 * i] + buffer[3 * i + 1] + buffer[3 * i + 2];
      pixels[i] = static_cast<float>(sum) / (3.0f * 255.0f);
    }
  }
  return GrayImage(w, h, std::move(pixels));
}

void write_png(const GrayImage& image, const std::filesystem::path& path) {
  png_image png = make_png_header(image);
  const std::vector<uint8_t> bytes = to_bytes(image);
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

std::vector<uint8_t> encode_png(const GrayImage& image) {
  png_image png = make_png_header(image);
  const std::vector<uint8_t> bytes = to_bytes(image);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
    throw DataError(std::string("cannot encode PNG: ") + png.message);
  }
  std::vector<uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
    throw DataError(std::string("cannot encode PNG: ") + png.message);
  }
  out.resize(size);
  return out;
}

GrayImage resample_rect(const GrayImage& image, double x, double y, double w, double h, int out_w, int out_h) {
  return resample_warped(image, Affine2D::identity(), x, y, w, h, out_w, out_h);
}

GrayImage resample_warped(const GrayImage& image, const Affine2D& to_image, double x, double y, double w, double h,
                          int out_w, int out_h) {
  GrayImage out(out_w, out_h);
  const double sx = w / out_w;
  const double sy = h / out_h;
  for (int v = 0; v < out_h; ++v) {
    const double py = y + (v + 0.5) * sy - 0.5;
    for (int u = 0; u < out_w; ++u) {
      const Point2 p = to_image.apply({x + (u + 0.5) * sx - 0.5, py});
      out.at(u, v) = image.bilinear(p.x, p.y);
    }
  }
  return out;
}

}  // namespace dupscan
