#include "mifgsm/gsbridge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "mifgsm/attack.hpp"
#include "mifgsm/errors.hpp"
#include "mifgsm/hash.hpp"
#include "mifgsm/logging.hpp"
#include "mifgsm/prng.hpp"

namespace fs = std::filesystem;

namespace mifgsm {

std::string to_string(SplitStrategy s) { return s == SplitStrategy::random ? "random" : "positional"; }

SplitStrategy split_strategy_from_string(const std::string& s) {
  if (s == "random") return SplitStrategy::random;
  if (s == "positional") return SplitStrategy::positional;
  throw ParameterError("unknown split strategy: " + s);
}

Split SplitAssignment::split_of(const std::string& id) const {
  if (std::find(train_ids.begin(), train_ids.end(), id) != train_ids.end()) return Split::train;
  if (std::find(test_ids.begin(), test_ids.end(), id) != test_ids.end()) return Split::test;
  return Split::unassigned;
}

nlohmann::json SplitAssignment::to_json() const {
  return {{"train", train_ids}, {"test", test_ids}, {"ratio", ratio}, {"seed", seed}, {"strategy", to_string(strategy)}};
}

SplitAssignment SplitAssignment::from_json(const nlohmann::json& j) {
  try {
    SplitAssignment s;
    s.train_ids = j.at("train").get<std::vector<std::string>>();
    s.test_ids = j.at("test").get<std::vector<std::string>>();
    s.ratio = j.at("ratio").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.strategy = split_strategy_from_string(j.value("strategy", std::string("random")));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed split: ") + e.what());
  }
}

SplitAssignment make_split(const DatasetManifest& manifest, double ratio, std::uint64_t seed, SplitStrategy strategy) {
  const std::size_t n = manifest.records.size();
  if (!(ratio > 0.0 && ratio < 1.0)) throw ParameterError("split ratio must lie in (0,1)");
  if (n < 2) throw ParameterError("a split needs at least 2 records");
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw ParameterError("ratio " + std::to_string(ratio) + " leaves one side of the split empty for " +
                         std::to_string(n) + " records");
  }
  const std::size_t n_test = n - n_train;

  std::vector<char> is_test(n, 0);
  if (strategy == SplitStrategy::random) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    SplitMix64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t i = n_train; i < n; ++i) is_test[order[i]] = 1;
  } else {
    for (std::size_t k = 0; k < n_test; ++k) is_test[(2 * k + 1) * n / (2 * n_test)] = 1;
  }

  SplitAssignment s;
  s.ratio = ratio;
  s.seed = seed;
  s.strategy = strategy;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? s.test_ids : s.train_ids).push_back(manifest.records[i].id);
  return s;
}

DatasetManifest apply_split(const DatasetManifest& manifest, const SplitAssignment& split) {
  DatasetManifest out = manifest;
  for (auto& r : out.records) r.split = split.split_of(r.id);
  return out;
}

std::string to_string(ExportCondition c) { return c == ExportCondition::original ? "original" : "adversarial"; }

ExportCondition export_condition_from_string(const std::string& s) {
  if (s == "original") return ExportCondition::original;
  if (s == "adversarial") return ExportCondition::adversarial;
  throw ParameterError("unknown export condition: " + s);
}

nlohmann::json ExportDescriptor::to_json() const {
  nlohmann::json files_j = nlohmann::json::array();
  for (const auto& f : files) {
    files_j.push_back({{"image_id", f.image_id}, {"path", f.path.generic_string()}, {"sha256", f.sha256}});
  }
  return {{"object_class", object_class},
          {"condition", to_string(condition)},
          {"files", files_j},
          {"held_out_ids", held_out_ids},
          {"manifest_sha256", manifest_sha256}};
}

ExportDescriptor export_training_set(const DatasetManifest& manifest, const SplitAssignment& split,
                                     ExportCondition condition, const ExportSources& sources, const fs::path& out_dir) {
  std::map<std::string, fs::path> inputs;
  std::vector<std::string> missing;
  for (const auto& id : split.train_ids) {
    const ManifestEntry* entry = manifest.find(id);
    if (!entry) throw OrphanError("split id '" + id + "' is not in the manifest");
    fs::path src;
    if (condition == ExportCondition::original) {
      src = sources.manifest_dir / (entry->prepared_path.empty() ? entry->source_path : entry->prepared_path);
    } else {
      src = sources.adversarial_dir / adversarial_filename(id);
    }
    if (!fs::is_regular_file(src)) {
      missing.push_back(id);
      continue;
    }
    inputs[id] = src;
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw CompletenessError("missing " + to_string(condition) + " images for: " + list);
  }

  const fs::path images = out_dir / "images";
  fs::remove_all(images);
  fs::create_directories(images);

  ExportDescriptor d;
  d.object_class = manifest.object_class;
  d.condition = condition;
  d.held_out_ids = split.test_ids;

  nlohmann::json frames = nlohmann::json::array();
  for (const auto& id : split.train_ids) {
    const fs::path rel = fs::path("images") / (id + ".png");
    // Decode and re-encode so every export is PNG regardless of the source format.
    io::write_png(out_dir / rel, io::read_rgb(inputs.at(id)));
    d.files.push_back({id, rel, sha256_file(out_dir / rel)});
    frames.push_back({{"file_path", rel.generic_string()},
                      {"image_id", id},
                      {"frame_index", manifest.find(id)->frame_index}});
  }

  const nlohmann::json transforms = {{"object_class", manifest.object_class},
                                     {"condition", to_string(condition)},
                                     {"frames", frames},
                                     {"held_out_camera_ids", split.test_ids},
                                     {"split", split.to_json()}};
  const std::string text = transforms.dump(2) + "\n";
  {
    std::ofstream out(out_dir / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (out_dir / "manifest.json").string());
    out << text;
  }
  d.manifest_sha256 = sha256_hex(text);

  std::ofstream desc(out_dir / "export_descriptor.json", std::ios::binary);
  if (!desc) throw IoError("cannot write export descriptor in " + out_dir.string());
  desc << d.to_json().dump(2) << '\n';
  return d;
}

std::string to_string(RenderCondition c) {
  return c == RenderCondition::original_model ? "original_model" : "adversarial_model";
}

RenderCondition render_condition_from_string(const std::string& s) {
  if (s == "original_model" || s == "original") return RenderCondition::original_model;
  if (s == "adversarial_model" || s == "adversarial") return RenderCondition::adversarial_model;
  throw ParameterError("unknown render condition: " + s);
}

std::string render_filename(const std::string& image_id) { return image_id + "_render.png"; }

std::vector<RenderRecord> ingest_renders(const fs::path& render_dir, const SplitAssignment& split,
                                         RenderCondition condition, int side) {
  if (!fs::is_directory(render_dir)) throw IoError("not a directory: " + render_dir.string());
  static const std::string kSuffix = "_render";

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(render_dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::map<std::string, fs::path> by_id;
  for (const auto& f : files) {
    const std::string stem = f.stem().string();
    if (!io::is_supported_raster(f) || stem.size() <= kSuffix.size() ||
        stem.compare(stem.size() - kSuffix.size(), kSuffix.size(), kSuffix) != 0) {
      log::warn("ignoring " + f.string() + ": not named <image_id>_render.<png|jpg>");
      continue;
    }
    const std::string id = stem.substr(0, stem.size() - kSuffix.size());
    if (split.split_of(id) == Split::unassigned) {
      throw OrphanError("render " + f.filename().string() + " names id '" + id + "' which is not in the split");
    }
    if (!by_id.emplace(id, f).second) {
      throw DuplicateError("id '" + id + "' has two renders: " + by_id[id].filename().string() + " and " +
                           f.filename().string());
    }
  }
  if (by_id.empty()) log::warn("no renders found in " + render_dir.string());

  std::vector<RenderRecord> out;
  // Order: train ids then test ids, each in split order.
  for (const auto* ids : {&split.train_ids, &split.test_ids}) {
    for (const auto& id : *ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) continue;
      RenderRecord r;
      r.image_id = id;
      r.condition = condition;
      r.split = split.split_of(id);
      r.source_path = it->second;
      r.pixels = io::read_rgb(it->second);
      if (r.pixels.width != side || r.pixels.height != side) {
        r.pixels = resize_image(r.pixels, side, Resample::bilinear, AspectPolicy::stretch);
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace mifgsm
