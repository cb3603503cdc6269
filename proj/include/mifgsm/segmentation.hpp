#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mifgsm/image.hpp"
#include "mifgsm/ingest.hpp"

namespace mifgsm {

// Inclusive pixel bounds of the mask's 1-region.
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ObjectMask {
  std::string image_id;
  BinaryMask mask;
  std::optional<BBox> bbox;  // absent iff the mask is empty
  std::optional<double> quality;
  std::string provider;
};

std::optional<BBox> tight_bbox(const BinaryMask& mask);

// One candidate returned by a segmentation provider. Soft values in [0,1].
struct MaskProposal {
  int width = 0;
  int height = 0;
  std::vector<float> soft;
  double quality = 0.0;
  std::optional<BBox> bbox;

  // Binarized at 0.5: values strictly above 0.5 become 1.
  BinaryMask binarize() const;
};

// Prompt-free (automatic mode) segmentation backend. Instances may hold a
// session and are not required to be thread-safe; use one per worker.
class SegmentationProvider {
 public:
  virtual ~SegmentationProvider() = default;
  // Throws ProviderError on transport or backend failure.
  virtual std::vector<MaskProposal> propose(const RgbImage& image) = 0;
  virtual std::string name() const = 0;
};

using ProviderFactory = std::function<std::unique_ptr<SegmentationProvider>()>;

struct AcquireOptions {
  // Union every proposal with quality >= merge_threshold instead of picking one.
  bool merge_instances = false;
  double merge_threshold = 0.5;
  // On an empty proposal list return an all-ones mask instead of throwing.
  bool fallback_full = false;
};

// Picks the best proposal: highest quality, then larger area, then lower index.
std::size_t select_proposal(const std::vector<MaskProposal>& proposals);

ObjectMask acquire_mask(const ImageRecord& record, SegmentationProvider& provider,
                        const AcquireOptions& options = {});

// Reads a single-channel raster; > 127 maps to 1. Throws AlignmentError if
// the raster is not expected_width x expected_height.
ObjectMask load_mask(const std::filesystem::path& path, const std::string& image_id, int expected_width,
                     int expected_height);
// 0/255 single-channel PNG.
void save_mask(const std::filesystem::path& path, const ObjectMask& mask);

std::string mask_filename(const std::string& image_id);  // <id>_mask.png

struct MaskStats {
  double coverage = 0.0;
  int component_count = 0;  // 4-connected
};

MaskStats mask_stats(const BinaryMask& mask);
inline MaskStats mask_stats(const ObjectMask& m) { return mask_stats(m.mask); }

nlohmann::json mask_metadata_json(const ObjectMask& mask);

// ---------------------------------------------------------------------------
// Providers

// Returns a fixed proposal list (or the result of a callback). For tests and
// offline runs.
class StubProvider : public SegmentationProvider {
 public:
  using Callback = std::function<std::vector<MaskProposal>(const RgbImage&)>;

  explicit StubProvider(std::vector<MaskProposal> proposals, std::string name = "stub");
  explicit StubProvider(Callback callback, std::string name = "stub");

  std::vector<MaskProposal> propose(const RgbImage& image) override;
  std::string name() const override { return name_; }
  int calls() const noexcept { return calls_; }

 private:
  Callback callback_;
  std::string name_;
  int calls_ = 0;
};

// Single all-ones proposal with quality 1: turns the attack into plain
// (iterative) FGSM.
class FullFrameProvider : public SegmentationProvider {
 public:
  std::vector<MaskProposal> propose(const RgbImage& image) override;
  std::string name() const override { return "full-frame"; }
};

// Runs an external command once per image:
//   <command> <input.png> <output_dir>
// The command writes <output_dir>/proposals.json (see parse_proposals_json).
class ProcessProvider : public SegmentationProvider {
 public:
  explicit ProcessProvider(std::string command, std::filesystem::path scratch_dir = {});
  std::vector<MaskProposal> propose(const RgbImage& image) override;
  std::string name() const override { return "process:" + command_; }

 private:
  std::string command_;
  std::filesystem::path scratch_;
  int counter_ = 0;
};

// POSTs the image to <endpoint>/v1/segment as JSON
//   {"width": W, "height": H, "pixels": [HWC uint8...]}
// and expects {"provider": "...", "proposals": [...]}.
class HttpProvider : public SegmentationProvider {
 public:
  explicit HttpProvider(std::string endpoint, double timeout_seconds = 120.0);
  std::vector<MaskProposal> propose(const RgbImage& image) override;
  std::string name() const override;

 private:
  std::string endpoint_;
  double timeout_;
  std::string remote_name_;
};

// Proposal schema shared by the process and HTTP providers:
//   {"proposals": [{"quality": q, "bbox": [x0,y0,x1,y1]?,
//                   "mask": [H*W floats in [0,1]]  |  "mask_path": "file.png"}]}
// mask_path is resolved against base_dir; 8-bit files are scaled by 1/255.
std::vector<MaskProposal> parse_proposals_json(const nlohmann::json& j, int width, int height,
                                               const std::filesystem::path& base_dir = {});

}  // namespace mifgsm
