#include "mifgsm/segmentation.hpp"

#include <algorithm>
#include <limits>

#include "mifgsm/errors.hpp"

namespace mifgsm {

std::optional<BBox> tight_bbox(const BinaryMask& mask) {
  BBox b{mask.width, mask.height, -1, -1};
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
    }
  }
  if (b.x1 < 0) return std::nullopt;
  return b;
}

BinaryMask MaskProposal::binarize() const {
  if (soft.size() != static_cast<std::size_t>(width) * height) {
    throw ContractError("proposal mask holds " + std::to_string(soft.size()) + " values for " +
                        std::to_string(width) + "x" + std::to_string(height));
  }
  BinaryMask m(width, height);
  for (std::size_t i = 0; i < soft.size(); ++i) m.bits[i] = soft[i] > 0.5f ? 1 : 0;
  return m;
}

std::size_t select_proposal(const std::vector<MaskProposal>& proposals) {
  if (proposals.empty()) throw NoObjectError("provider returned no proposals");
  std::size_t best = 0;
  std::size_t best_area = proposals[0].binarize().count();
  for (std::size_t i = 1; i < proposals.size(); ++i) {
    const std::size_t area = proposals[i].binarize().count();
    const double q = proposals[i].quality;
    const double bq = proposals[best].quality;
    // Strict comparisons keep the lower index on full ties.
    if (q > bq || (q == bq && area > best_area)) {
      best = i;
      best_area = area;
    }
  }
  return best;
}

ObjectMask acquire_mask(const ImageRecord& record, SegmentationProvider& provider, const AcquireOptions& options) {
  const RgbImage& img = record.pixels;
  if (img.empty()) throw ParameterError("record '" + record.id + "' has no pixels");

  auto proposals = provider.propose(img);
  for (const auto& p : proposals) {
    if (p.width != img.width || p.height != img.height) {
      throw AlignmentError("provider proposal " + std::to_string(p.width) + "x" + std::to_string(p.height) +
                           " does not match image '" + record.id + "' " + std::to_string(img.width) + "x" +
                           std::to_string(img.height));
    }
  }

  ObjectMask out;
  out.image_id = record.id;
  out.provider = provider.name();

  if (proposals.empty()) {
    if (!options.fallback_full) throw NoObjectError("no object found in '" + record.id + "'");
    out.mask = BinaryMask::full(img.width, img.height);
    out.bbox = tight_bbox(out.mask);
    out.provider += "+full-fallback";
    return out;
  }

  const std::size_t best = select_proposal(proposals);
  if (options.merge_instances) {
    BinaryMask merged(img.width, img.height);
    double quality = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& p : proposals) {
      if (p.quality < options.merge_threshold) continue;
      const BinaryMask m = p.binarize();
      for (std::size_t i = 0; i < m.bits.size(); ++i) merged.bits[i] |= m.bits[i];
      quality = std::max(quality, p.quality);
      any = true;
    }
    if (any) {
      out.mask = std::move(merged);
      out.quality = quality;
      out.bbox = tight_bbox(out.mask);
      return out;
    }
  }
  out.mask = proposals[best].binarize();
  out.quality = proposals[best].quality;
  out.bbox = tight_bbox(out.mask);
  return out;
}

std::string mask_filename(const std::string& image_id) { return image_id + "_mask.png"; }

ObjectMask load_mask(const std::filesystem::path& path, const std::string& image_id, int expected_width,
                     int expected_height) {
  const io::GrayImage g = io::read_gray(path);
  if (g.width != expected_width || g.height != expected_height) {
    throw AlignmentError("mask " + path.string() + " is " + std::to_string(g.width) + "x" +
                         std::to_string(g.height) + " but image '" + image_id + "' is " +
                         std::to_string(expected_width) + "x" + std::to_string(expected_height));
  }
  ObjectMask m;
  m.image_id = image_id;
  m.mask = BinaryMask(g.width, g.height);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) m.mask.bits[i] = g.pixels[i] > 127 ? 1 : 0;
  m.bbox = tight_bbox(m.mask);
  m.provider = "file";
  return m;
}

void save_mask(const std::filesystem::path& path, const ObjectMask& mask) {
  io::GrayImage g{mask.mask.width, mask.mask.height, std::vector<std::uint8_t>(mask.mask.bits.size())};
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = mask.mask.bits[i] ? 255 : 0;
  io::write_gray_png(path, g);
}

MaskStats mask_stats(const BinaryMask& mask) {
  MaskStats s;
  if (mask.bits.empty()) return s;
  s.coverage = static_cast<double>(mask.count()) / static_cast<double>(mask.bits.size());

  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.bits.size(); ++start) {
    if (!mask.bits[start] || seen[start]) continue;
    ++s.component_count;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(i % mask.width);
      const int y = static_cast<int>(i / mask.width);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= mask.width || ny[k] >= mask.height) continue;
        const std::size_t j = static_cast<std::size_t>(ny[k]) * mask.width + nx[k];
        if (mask.bits[j] && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  return s;
}

nlohmann::json mask_metadata_json(const ObjectMask& m) {
  const MaskStats s = mask_stats(m.mask);
  nlohmann::json j = {{"image_id", m.image_id},
                      {"width", m.mask.width},
                      {"height", m.mask.height},
                      {"provider", m.provider},
                      {"coverage", s.coverage},
                      {"component_count", s.component_count}};
  j["quality"] = m.quality ? nlohmann::json(*m.quality) : nlohmann::json(nullptr);
  j["bbox"] = m.bbox ? nlohmann::json::array({m.bbox->x0, m.bbox->y0, m.bbox->x1, m.bbox->y1})
                     : nlohmann::json(nullptr);
  return j;
}

}  // namespace mifgsm
