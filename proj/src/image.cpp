#include "mifgsm/image.hpp"

#include <algorithm>
#include <cctype>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mifgsm/errors.hpp"
#include "mifgsm/simd/kernels.hpp"

namespace mifgsm {

RgbImage::RgbImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * kChannels, fill) {}

FloatImage::FloatImage(int w, int h, float fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h * RgbImage::kChannels, fill) {}

FloatImage::FloatImage(const RgbImage& img)
    : width(img.width), height(img.height), data(img.pixels.begin(), img.pixels.end()) {}

BinaryMask::BinaryMask(int w, int h, std::uint8_t value)
    : width(w), height(h), bits(static_cast<std::size_t>(w) * h, value ? 1 : 0) {}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {
std::string shape(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }
}  // namespace

void require_same_shape(const RgbImage& img, const BinaryMask& mask) {
  if (img.width != mask.width || img.height != mask.height) {
    throw AlignmentError("mask " + shape(mask.width, mask.height) + " does not match image " +
                         shape(img.width, img.height));
  }
}

void require_same_shape(const FloatImage& img, const BinaryMask& mask) {
  if (img.width != mask.width || img.height != mask.height) {
    throw AlignmentError("mask " + shape(mask.width, mask.height) + " does not match image " +
                         shape(img.width, img.height));
  }
}

RgbImage quantize(const FloatImage& img) {
  RgbImage out(img.width, img.height);
  simd::active_kernels().quantize_u8(img.data.data(), out.pixels.data(), img.data.size());
  return out;
}

std::vector<float> channel_mask(const BinaryMask& mask) {
  std::vector<float> plane(mask.bits.size() * RgbImage::kChannels);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    const float m = mask.bits[i] ? 1.0f : 0.0f;
    plane[3 * i] = plane[3 * i + 1] = plane[3 * i + 2] = m;
  }
  return plane;
}

namespace io {
namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

bool is_supported_raster(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

RgbImage read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot decode image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage out(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  if (lower_ext(path) != ".png") {
    throw IoError("refusing lossy or unknown output format: " + path.string());
  }
  cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  ensure_parent(path);
  if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write " + path.string());
}

GrayImage read_gray(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IoError("cannot decode image: " + path.string());
  if (m.channels() != 1 || m.depth() != CV_8U) {
    throw IoError("expected a single-channel 8-bit raster: " + path.string());
  }
  GrayImage out{m.cols, m.rows, std::vector<std::uint8_t>(static_cast<std::size_t>(m.cols) * m.rows)};
  for (int y = 0; y < m.rows; ++y) {
    std::copy_n(m.ptr<std::uint8_t>(y), m.cols, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * m.cols);
  }
  return out;
}

void write_gray_png(const std::filesystem::path& path, const GrayImage& img) {
  if (lower_ext(path) != ".png") throw IoError("masks must be PNG: " + path.string());
  cv::Mat m(img.height, img.width, CV_8UC1, const_cast<std::uint8_t*>(img.pixels.data()));
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write " + path.string());
}

}  // namespace io
}  // namespace mifgsm
