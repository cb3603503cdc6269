#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mifgsm/image.hpp"

namespace mifgsm {

enum class Split { train, test, unassigned };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// One frame of an object capture.
struct ImageRecord {
  std::string id;  // source filename stem
  std::string class_label;
  int frame_index = 0;
  RgbImage pixels;
  Split split = Split::unassigned;
  std::filesystem::path source_path;
};

enum class Resample { bilinear, area, nearest };
// stretch resizes straight to side x side; center_crop cuts the largest
// centred square first.
enum class AspectPolicy { stretch, center_crop };

std::string to_string(Resample r);
std::string to_string(AspectPolicy a);
Resample resample_from_string(const std::string& s);
AspectPolicy aspect_from_string(const std::string& s);

struct PrepareOptions {
  int stride = 5;
  int offset = 0;
  int side = 224;
  Resample resample = Resample::bilinear;
  AspectPolicy aspect = AspectPolicy::stretch;
  std::uint64_t seed = 0;
};

// Supported raster files in lexicographic filename order. Throws
// NoFramesError when the directory holds none.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& directory);

std::vector<ImageRecord> load_sequence(const std::filesystem::path& directory,
                                       const std::string& class_label);

// Keeps positions offset, offset + stride, offset + 2*stride, ...
std::vector<ImageRecord> subsample(const std::vector<ImageRecord>& records, int stride,
                                   int offset = 0);
std::vector<std::size_t> subsample_positions(std::size_t count, int stride, int offset = 0);

ImageRecord resize_to_input(const ImageRecord& record, int side = 224,
                            Resample resample = Resample::bilinear,
                            AspectPolicy aspect = AspectPolicy::stretch);
RgbImage resize_image(const RgbImage& img, int side, Resample resample, AspectPolicy aspect);

struct ManifestEntry {
  std::string id;
  std::filesystem::path source_path;    // relative to the manifest directory
  std::filesystem::path prepared_path;  // relative to the manifest directory; may be empty
  int frame_index = 0;
  Split split = Split::unassigned;
};

struct DatasetManifest {
  std::string object_class;
  std::vector<ManifestEntry> records;  // ascending frame_index
  int subsample_stride = 1;
  int subsample_offset = 0;
  int source_count = 0;
  std::uint64_t seed = 0;
  int side = 224;
  Resample resample = Resample::bilinear;
  AspectPolicy aspect = AspectPolicy::stretch;

  const ManifestEntry* find(const std::string& id) const;
};

// Scans, subsamples, decodes the kept frames, resizes them and writes them as
// PNG under prepared_dir/<id>.png. Paths in the returned manifest are relative
// to manifest_dir.
DatasetManifest prepare_dataset(const std::filesystem::path& directory, const std::string& class_label,
                                const PrepareOptions& options, const std::filesystem::path& prepared_dir,
                                const std::filesystem::path& manifest_dir);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace mifgsm
