#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "mifgsm/image.hpp"
#include "mifgsm/victim.hpp"

namespace testsupport {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mifgsm-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

inline mifgsm::RgbImage random_image(int w, int h, std::mt19937& rng) {
  mifgsm::RgbImage img(w, h);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(d(rng));
  return img;
}

// Piecewise-constant image: one random RGB colour per block x block tile.
inline mifgsm::RgbImage blocky_image(int side, int block, std::mt19937& rng) {
  mifgsm::RgbImage img(side, side);
  std::uniform_int_distribution<int> d(0, 255);
  const int tiles = (side + block - 1) / block;
  std::vector<std::uint8_t> colours(static_cast<std::size_t>(tiles) * tiles * 3);
  for (auto& c : colours) c = static_cast<std::uint8_t>(d(rng));
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = colours[(static_cast<std::size_t>(y / block) * tiles + x / block) * 3 + c];
  return img;
}

// Mix of shapes: random rectangles, random per-pixel noise, or empty/full.
inline mifgsm::BinaryMask random_mask(int w, int h, std::mt19937& rng) {
  mifgsm::BinaryMask m(w, h);
  std::uniform_int_distribution<int> kind(0, 3);
  switch (kind(rng)) {
    case 0: {
      std::uniform_int_distribution<int> dx(0, w - 1), dy(0, h - 1);
      int x0 = dx(rng), x1 = dx(rng), y0 = dy(rng), y1 = dy(rng);
      if (x0 > x1) std::swap(x0, x1);
      if (y0 > y1) std::swap(y0, y1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m.at(x, y) = 1;
      break;
    }
    case 1: {
      std::bernoulli_distribution b(0.3);
      for (auto& v : m.bits) v = b(rng) ? 1 : 0;
      break;
    }
    case 2: {
      // disc
      std::uniform_int_distribution<int> dx(0, w - 1), dy(0, h - 1), dr(1, std::max(2, w / 3));
      const int cx = dx(rng), cy = dy(rng), r = dr(rng);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(x, y) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
      break;
    }
    default:
      for (int y = h / 4; y < 3 * h / 4; ++y)
        for (int x = 0; x < w / 2; ++x) m.at(x, y) = 1;
  }
  return m;
}

inline mifgsm::ClassVocabulary vocab_of(std::initializer_list<const char*> labels) {
  mifgsm::ClassVocabulary v;
  for (const char* l : labels) v.labels.emplace_back(l);
  return v;
}

}  // namespace testsupport
