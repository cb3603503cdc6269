#include "mifgsm/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mifgsm/errors.hpp"

namespace fs = std::filesystem;

namespace mifgsm {

std::string to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::test:
      return "test";
    case Split::unassigned:
      return "unassigned";
  }
  return "unassigned";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  if (s == "unassigned") return Split::unassigned;
  throw ParameterError("unknown split tag: " + s);
}

std::string to_string(Resample r) {
  switch (r) {
    case Resample::bilinear:
      return "bilinear";
    case Resample::area:
      return "area";
    case Resample::nearest:
      return "nearest";
  }
  return "bilinear";
}

std::string to_string(AspectPolicy a) { return a == AspectPolicy::stretch ? "stretch" : "center_crop"; }

Resample resample_from_string(const std::string& s) {
  if (s == "bilinear") return Resample::bilinear;
  if (s == "area") return Resample::area;
  if (s == "nearest") return Resample::nearest;
  throw ParameterError("unknown resampling kernel: " + s);
}

AspectPolicy aspect_from_string(const std::string& s) {
  if (s == "stretch") return AspectPolicy::stretch;
  if (s == "center_crop") return AspectPolicy::center_crop;
  throw ParameterError("unknown aspect policy: " + s);
}

std::vector<fs::path> list_frames(const fs::path& directory) {
  if (!fs::is_directory(directory)) throw IoError("not a directory: " + directory.string());
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && io::is_supported_raster(entry.path())) frames.push_back(entry.path());
  }
  if (frames.empty()) throw NoFramesError("no frames in " + directory.string());
  std::sort(frames.begin(), frames.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return frames;
}

namespace {

ImageRecord make_record(const fs::path& path, const std::string& label, int index) {
  ImageRecord r;
  r.id = path.stem().string();
  r.class_label = label;
  r.frame_index = index;
  r.source_path = path;
  r.split = Split::unassigned;
  return r;
}

void require_unique_ids(const std::vector<fs::path>& frames) {
  std::set<std::string> seen;
  for (const auto& f : frames) {
    if (!seen.insert(f.stem().string()).second) {
      throw DuplicateError("two frames share the id '" + f.stem().string() + "'");
    }
  }
}

}  // namespace

std::vector<ImageRecord> load_sequence(const fs::path& directory, const std::string& class_label) {
  const auto frames = list_frames(directory);
  require_unique_ids(frames);
  std::vector<ImageRecord> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    ImageRecord r = make_record(frames[i], class_label, static_cast<int>(i));
    r.pixels = io::read_rgb(frames[i]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> subsample_positions(std::size_t count, int stride, int offset) {
  if (stride < 1) throw ParameterError("subsample stride must be >= 1, got " + std::to_string(stride));
  if (offset < 0) throw ParameterError("subsample offset must be >= 0");
  std::vector<std::size_t> keep;
  for (std::size_t i = static_cast<std::size_t>(offset); i < count; i += static_cast<std::size_t>(stride)) {
    keep.push_back(i);
  }
  return keep;
}

std::vector<ImageRecord> subsample(const std::vector<ImageRecord>& records, int stride, int offset) {
  std::vector<ImageRecord> out;
  for (std::size_t i : subsample_positions(records.size(), stride, offset)) out.push_back(records[i]);
  return out;
}

RgbImage resize_image(const RgbImage& img, int side, Resample resample, AspectPolicy aspect) {
  if (side <= 0) throw ParameterError("resize side must be positive, got " + std::to_string(side));
  if (img.empty()) throw ParameterError("cannot resize an empty image");

  cv::Mat src(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
  if (aspect == AspectPolicy::center_crop && img.width != img.height) {
    const int s = std::min(img.width, img.height);
    src = src(cv::Rect((img.width - s) / 2, (img.height - s) / 2, s, s));
  }
  if (src.cols == side && src.rows == side) {
    RgbImage out(side, side);
    cv::Mat dst(side, side, CV_8UC3, out.pixels.data());
    src.copyTo(dst);
    return out;
  }

  int interp = cv::INTER_LINEAR;
  if (resample == Resample::area) interp = cv::INTER_AREA;
  if (resample == Resample::nearest) interp = cv::INTER_NEAREST;

  RgbImage out(side, side);
  cv::Mat dst(side, side, CV_8UC3, out.pixels.data());
  cv::resize(src, dst, cv::Size(side, side), 0, 0, interp);
  return out;
}

ImageRecord resize_to_input(const ImageRecord& record, int side, Resample resample, AspectPolicy aspect) {
  ImageRecord out = record;
  out.pixels = resize_image(record.pixels, side, resample, aspect);
  return out;
}

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

DatasetManifest prepare_dataset(const fs::path& directory, const std::string& class_label,
                                const PrepareOptions& options, const fs::path& prepared_dir,
                                const fs::path& manifest_dir) {
  const auto frames = list_frames(directory);
  require_unique_ids(frames);
  const auto keep = subsample_positions(frames.size(), options.stride, options.offset);

  // Skipped frames are never decoded, but an unreadable file is still an error.
  for (const auto& f : frames) {
    if (!cv::haveImageReader(f.string())) throw IoError("unreadable frame: " + f.string());
  }

  DatasetManifest m;
  m.object_class = class_label;
  m.subsample_stride = options.stride;
  m.subsample_offset = options.offset;
  m.source_count = static_cast<int>(frames.size());
  m.seed = options.seed;
  m.side = options.side;
  m.resample = options.resample;
  m.aspect = options.aspect;

  fs::create_directories(prepared_dir);
  fs::create_directories(manifest_dir);
  for (std::size_t pos : keep) {
    ImageRecord r = make_record(frames[pos], class_label, static_cast<int>(pos));
    r.pixels = io::read_rgb(frames[pos]);
    r = resize_to_input(r, options.side, options.resample, options.aspect);
    const fs::path prepared = prepared_dir / (r.id + ".png");
    io::write_png(prepared, r.pixels);

    ManifestEntry e;
    e.id = r.id;
    e.frame_index = r.frame_index;
    e.split = Split::unassigned;
    e.source_path = fs::relative(fs::absolute(frames[pos]), fs::absolute(manifest_dir));
    e.prepared_path = fs::relative(fs::absolute(prepared), fs::absolute(manifest_dir));
    m.records.push_back(std::move(e));
  }
  return m;
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.records) {
    records.push_back({{"id", r.id},
                       {"source_path", r.source_path.generic_string()},
                       {"prepared_path", r.prepared_path.generic_string()},
                       {"frame_index", r.frame_index},
                       {"split", to_string(r.split)}});
  }
  return {{"object_class", m.object_class},
          {"stride", m.subsample_stride},
          {"offset", m.subsample_offset},
          {"source_count", m.source_count},
          {"seed", m.seed},
          {"side", m.side},
          {"resample", to_string(m.resample)},
          {"aspect", to_string(m.aspect)},
          {"ordering", "lexicographic"},
          {"records", records}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.object_class = j.at("object_class").get<std::string>();
    m.subsample_stride = j.at("stride").get<int>();
    m.subsample_offset = j.value("offset", 0);
    m.source_count = j.at("source_count").get<int>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.side = j.value("side", 224);
    m.resample = resample_from_string(j.value("resample", std::string("bilinear")));
    m.aspect = aspect_from_string(j.value("aspect", std::string("stretch")));
    for (const auto& r : j.at("records")) {
      ManifestEntry e;
      e.id = r.at("id").get<std::string>();
      e.source_path = r.at("source_path").get<std::string>();
      e.prepared_path = r.value("prepared_path", std::string());
      e.frame_index = r.at("frame_index").get<int>();
      e.split = split_from_string(r.value("split", std::string("unassigned")));
      m.records.push_back(std::move(e));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest_to_json(manifest).dump(2) << '\n';
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace mifgsm
