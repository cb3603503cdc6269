#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mifgsm {

// 8-bit RGB raster, row-major, channels interleaved (HWC).
struct RgbImage {
  static constexpr int kChannels = 3;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0);

  bool empty() const noexcept { return pixels.empty(); }
  std::size_t size() const noexcept { return pixels.size(); }
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
  }
  std::uint8_t& at(int x, int y, int c) { return pixels[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[index(x, y, c)]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Continuous-valued image in the 8-bit pixel domain ([0,255] when valid).
// Also used for gradients, which share the H x W x 3 layout.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(int w, int h, float fill = 0.0f);
  explicit FloatImage(const RgbImage& img);

  std::size_t size() const noexcept { return data.size(); }
  bool same_shape(const FloatImage& o) const noexcept {
    return width == o.width && height == o.height;
  }

  friend bool operator==(const FloatImage&, const FloatImage&) = default;
};

// Binary per-pixel mask; values are exactly 0 or 1.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h, std::uint8_t value = 0);

  static BinaryMask full(int w, int h) { return BinaryMask(w, h, 1); }

  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const noexcept;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Shape checks shared by every module that pairs images with masks.
void require_same_shape(const RgbImage& img, const BinaryMask& mask);
void require_same_shape(const FloatImage& img, const BinaryMask& mask);

// Round to nearest and clamp into [0,255].
RgbImage quantize(const FloatImage& img);

// Expands a pixel mask to a per-element {0,1} plane aligned with HWC data.
std::vector<float> channel_mask(const BinaryMask& mask);

namespace io {

RgbImage read_rgb(const std::filesystem::path& path);
// Lossless output only; any extension other than .png is rejected.
void write_png(const std::filesystem::path& path, const RgbImage& img);

// Single-channel 8-bit raster.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_gray(const std::filesystem::path& path);
void write_gray_png(const std::filesystem::path& path, const GrayImage& img);

bool is_supported_raster(const std::filesystem::path& path);

}  // namespace io
}  // namespace mifgsm
