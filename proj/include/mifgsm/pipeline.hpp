#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mifgsm/attack.hpp"
#include "mifgsm/evaluation.hpp"
#include "mifgsm/gsbridge.hpp"
#include "mifgsm/ingest.hpp"
#include "mifgsm/segmentation.hpp"
#include "mifgsm/victim.hpp"

namespace mifgsm {

struct VictimSpec {
  std::string kind = "reference";  // reference | http
  std::string endpoint;            // http; MIFGSM_VICTIM_ENDPOINT overrides
  std::filesystem::path weights;   // reference; random weights when empty
  std::uint64_t seed = 0;
  double scale = 0.05;
  nlohmann::json options = nlohmann::json::object();  // passed through, recorded
};

struct MaskProviderSpec {
  std::string kind = "full";  // full | process | http | files
  std::string command;        // process; MIFGSM_MASK_COMMAND overrides
  std::string endpoint;       // http; MIFGSM_MASK_ENDPOINT overrides
  std::filesystem::path directory;  // files: <directory>/<class>/<id>_mask.png
  AcquireOptions acquire;
  int retries = 1;
};

struct RunConfig {
  std::map<std::string, std::filesystem::path> classes;  // object class -> frame directory
  std::filesystem::path vocabulary;                       // default vocabulary when empty
  VictimSpec victim;
  MaskProviderSpec masks;
  PrepareOptions prepare;
  AttackConfig attack;
  std::string target_label;  // targeted mode; resolved against the vocabulary
  double split_ratio = 0.85;
  std::uint64_t split_seed = 0;
  SplitStrategy split_strategy = SplitStrategy::random;
  std::filesystem::path output_root = "runs";
  std::string tag = "run";
  int workers = 1;

  // Relative paths are resolved against base_dir.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  ClassVocabulary load_vocabulary() const;
};

// runs/<timestamp>-<tag>/{manifests,prepared,masks,adv,exports,renders,predictions,reports,logs}
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path manifest(const std::string& cls) const { return root / "manifests" / (cls + ".json"); }
  std::filesystem::path manifests_dir() const { return root / "manifests"; }
  std::filesystem::path prepared(const std::string& cls) const { return root / "prepared" / cls; }
  std::filesystem::path masks(const std::string& cls) const { return root / "masks" / cls; }
  std::filesystem::path adv(const std::string& cls) const { return root / "adv" / cls; }
  std::filesystem::path exports(const std::string& cls) const { return root / "exports" / cls; }
  std::filesystem::path renders(const std::string& cls, RenderCondition c) const {
    return root / "renders" / cls / to_string(c);
  }
  std::filesystem::path predictions() const { return root / "predictions"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path logs() const { return root / "logs"; }

  void create() const;
};

// Creates output_root/<YYYYmmdd-HHMMSS>-<tag>.
RunLayout new_run(const RunConfig& config);

// Copies the config text verbatim to <run>/config.json. An existing copy with
// different content is a ConfigError unless overwrite is set.
void record_config(const RunLayout& layout, const std::string& config_text, bool overwrite = false);

// Merges key -> value into <run>/run.json (provenance: providers, seeds,
// kernel variant).
void record_provenance(const RunLayout& layout, const std::string& key, const nlohmann::json& value);

enum ExitCode : int { kExitOk = 0, kExitFatal = 1, kExitPartial = 2 };

struct CommandOutcome {
  int exit_code = kExitOk;
  nlohmann::json summary = nlohmann::json::object();
};

std::unique_ptr<VictimModel> make_victim(const RunConfig& config);
std::unique_ptr<SegmentationProvider> make_provider(const RunConfig& config);

CommandOutcome cmd_prepare(const RunConfig& config, const RunLayout& layout);
CommandOutcome cmd_mask(const RunConfig& config, const RunLayout& layout, const ProviderFactory& factory = {});
CommandOutcome cmd_attack(const RunConfig& config, const RunLayout& layout, const VictimFactory& factory = {});
CommandOutcome cmd_export_gs(const RunConfig& config, const RunLayout& layout,
                             const std::vector<ExportCondition>& conditions);
CommandOutcome cmd_ingest_renders(const RunConfig& config, const RunLayout& layout, const std::string& cls,
                                  RenderCondition condition, const std::filesystem::path& render_dir);
CommandOutcome cmd_evaluate(const RunConfig& config, const RunLayout& layout, const std::vector<Condition>& conditions,
                            const VictimFactory& factory = {});
// Rebuilds reports from stored predictions; optionally draws a top-1 bar chart.
CommandOutcome cmd_report(const RunConfig& config, const RunLayout& layout, bool plot);

}  // namespace mifgsm
