#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mifgsm/image.hpp"
#include "mifgsm/ingest.hpp"

namespace mifgsm {

// random: SplitMix64-seeded Fisher-Yates over manifest order, first
//         round(ratio * n) positions train.
// positional: test cameras evenly spaced, position floor((k + 0.5) * n / n_test).
enum class SplitStrategy { random, positional };

std::string to_string(SplitStrategy s);
SplitStrategy split_strategy_from_string(const std::string& s);

struct SplitAssignment {
  std::vector<std::string> train_ids;  // manifest order
  std::vector<std::string> test_ids;   // manifest order
  double ratio = 0.85;
  std::uint64_t seed = 0;
  SplitStrategy strategy = SplitStrategy::random;

  Split split_of(const std::string& id) const;  // unassigned if absent
  nlohmann::json to_json() const;
  static SplitAssignment from_json(const nlohmann::json& j);
};

SplitAssignment make_split(const DatasetManifest& manifest, double ratio, std::uint64_t seed,
                           SplitStrategy strategy = SplitStrategy::random);

// Copy of the manifest with every record's split tag filled in.
DatasetManifest apply_split(const DatasetManifest& manifest, const SplitAssignment& split);

enum class ExportCondition { original, adversarial };
std::string to_string(ExportCondition c);
ExportCondition export_condition_from_string(const std::string& s);

struct ExportSources {
  // Prepared images, resolved from the manifest's prepared_path entries.
  std::filesystem::path manifest_dir;
  // Holds <id>_adv.png for the adversarial condition.
  std::filesystem::path adversarial_dir;
};

struct ExportedFile {
  std::string image_id;
  std::filesystem::path path;  // relative to out_dir
  std::string sha256;
};

struct ExportDescriptor {
  std::string object_class;
  ExportCondition condition = ExportCondition::original;
  std::vector<ExportedFile> files;
  std::vector<std::string> held_out_ids;
  std::string manifest_sha256;

  nlohmann::json to_json() const;
};

// Writes out_dir/images/<id>.png for every train id and out_dir/manifest.json
// (file names plus held-out camera ids), replacing any previous images/ so
// no test frame can linger. Also writes out_dir/export_descriptor.json.
// Throws CompletenessError listing every train id without an _adv.png.
ExportDescriptor export_training_set(const DatasetManifest& manifest, const SplitAssignment& split,
                                     ExportCondition condition, const ExportSources& sources,
                                     const std::filesystem::path& out_dir);

enum class RenderCondition { original_model, adversarial_model };
std::string to_string(RenderCondition c);
RenderCondition render_condition_from_string(const std::string& s);

struct RenderRecord {
  std::string image_id;
  RgbImage pixels;
  RenderCondition condition = RenderCondition::original_model;
  Split split = Split::unassigned;
  std::filesystem::path source_path;
};

std::string render_filename(const std::string& image_id);  // <id>_render.png

// Reads <id>_render.{png,jpg,jpeg}; files without the suffix are ignored
// with a warning. Renders are resized to side x side (bilinear) if needed.
// Throws OrphanError for an id outside the split and DuplicateError when two
// files carry the same id.
std::vector<RenderRecord> ingest_renders(const std::filesystem::path& render_dir, const SplitAssignment& split,
                                         RenderCondition condition, int side = 224);

}  // namespace mifgsm
