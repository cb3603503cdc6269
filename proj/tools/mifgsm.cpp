// mifgsm: command-line driver for the masked iterative FGSM pipeline.
//
//   mifgsm prepare --config run.json
//   mifgsm mask    --config run.json --run-dir runs/20240101-120000-run
//   mifgsm attack  --config run.json --epsilon 2 --max-iters 50
//   mifgsm export-gs | ingest-renders | evaluate | report
//
// Without --run-dir, prepare creates a fresh run directory and every other
// command picks the newest one for the configured tag.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mifgsm/errors.hpp"
#include "mifgsm/logging.hpp"
#include "mifgsm/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mifgsm;

namespace {

struct Overrides {
  std::vector<std::string> classes;  // name=dir
  std::optional<std::string> vocabulary, victim, victim_endpoint, victim_weights;
  std::optional<std::uint64_t> victim_seed;
  std::optional<std::string> mask_provider, mask_command, mask_endpoint, mask_dir;
  bool merge_instances = false, fallback_full = false;
  std::optional<int> stride, offset, side;
  std::optional<std::string> resample, aspect;
  std::optional<double> epsilon, loss_threshold, prob_floor;
  std::optional<int> max_iters;
  std::optional<std::string> mode, target;
  bool strict_u8 = false;
  std::optional<double> split_ratio;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::string> split_strategy, output_root, tag;
  std::optional<int> workers;
};

template <class T>
void put(json& j, const char* section, const char* key, const std::optional<T>& v) {
  if (v) j[section][key] = *v;
}

// Flags are applied on top of the config file; paths given on the command
// line are relative to the working directory.
json apply_overrides(json j, const Overrides& o, const fs::path& config_dir) {
  auto cli_path = [&](const std::string& p) { return fs::relative(fs::absolute(p), config_dir).string(); };
  for (const auto& c : o.classes) {
    const auto eq = c.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--class expects name=directory, got '" + c + "'");
    j["classes"][c.substr(0, eq)] = cli_path(c.substr(eq + 1));
  }
  if (o.vocabulary) j["vocabulary"] = cli_path(*o.vocabulary);
  if (o.output_root) j["output_root"] = cli_path(*o.output_root);
  if (o.tag) j["tag"] = *o.tag;
  if (o.workers) j["workers"] = *o.workers;
  put(j, "victim", "kind", o.victim);
  put(j, "victim", "endpoint", o.victim_endpoint);
  if (o.victim_weights) j["victim"]["weights"] = cli_path(*o.victim_weights);
  put(j, "victim", "seed", o.victim_seed);
  put(j, "mask_provider", "kind", o.mask_provider);
  put(j, "mask_provider", "command", o.mask_command);
  put(j, "mask_provider", "endpoint", o.mask_endpoint);
  if (o.mask_dir) j["mask_provider"]["directory"] = cli_path(*o.mask_dir);
  if (o.merge_instances) j["mask_provider"]["merge_instances"] = true;
  if (o.fallback_full) j["mask_provider"]["fallback_full"] = true;
  put(j, "ingest", "stride", o.stride);
  put(j, "ingest", "offset", o.offset);
  put(j, "ingest", "side", o.side);
  put(j, "ingest", "resample", o.resample);
  put(j, "ingest", "aspect", o.aspect);
  put(j, "attack", "epsilon", o.epsilon);
  put(j, "attack", "max_iters", o.max_iters);
  put(j, "attack", "loss_threshold", o.loss_threshold);
  put(j, "attack", "prob_floor", o.prob_floor);
  put(j, "attack", "mode", o.mode);
  put(j, "attack", "target_label", o.target);
  if (o.strict_u8) j["attack"]["strict_u8"] = true;
  put(j, "split", "ratio", o.split_ratio);
  put(j, "split", "seed", o.split_seed);
  put(j, "split", "strategy", o.split_strategy);
  return j;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path latest_run(const RunConfig& config) {
  const std::string suffix = "-" + config.tag;
  std::optional<fs::path> best;
  if (fs::is_directory(config.output_root)) {
    for (const auto& e : fs::directory_iterator(config.output_root)) {
      const std::string name = e.path().filename().string();
      if (!e.is_directory() || name.size() <= suffix.size()) continue;
      if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
      if (!best || name > best->filename().string()) best = e.path();
    }
  }
  if (!best) {
    throw ConfigError("no run directory for tag '" + config.tag + "' under " + config.output_root.string() +
                      "; pass --run-dir or run prepare first");
  }
  return *best;
}

const char* level_name(log::Level l) {
  switch (l) {
    case log::Level::info: return "info";
    case log::Level::warn: return "warn";
    case log::Level::error: return "error";
  }
  return "?";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked iterative FGSM toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, run_dir;
  bool overwrite_config = false, quiet = false;
  Overrides o;
  app.add_option("--config", config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--run-dir", run_dir, "Existing run directory (default: newest for the tag)");
  app.add_flag("--overwrite-config", overwrite_config, "Replace a differing config copy in the run directory");
  app.add_flag("-q,--quiet", quiet, "Only print warnings and errors");

  app.add_option("--class", o.classes, "Object class source directory, name=dir (repeatable)");
  app.add_option("--vocabulary", o.vocabulary, "Class vocabulary file");
  app.add_option("--output-root", o.output_root, "Parent directory for run directories");
  app.add_option("--tag", o.tag, "Run directory tag");
  app.add_option("--workers", o.workers, "Worker threads (1 keeps runs bit-reproducible)")->check(CLI::PositiveNumber);
  app.add_option("--victim", o.victim, "Victim kind")->check(CLI::IsMember({"reference", "http"}));
  app.add_option("--victim-endpoint", o.victim_endpoint, "HTTP victim base URL (env MIFGSM_VICTIM_ENDPOINT wins)");
  app.add_option("--victim-weights", o.victim_weights, "Reference classifier weights (JSON)");
  app.add_option("--victim-seed", o.victim_seed, "Seed for random reference weights");
  app.add_option("--mask-provider", o.mask_provider, "Mask provider kind")
      ->check(CLI::IsMember({"full", "process", "http", "files"}));
  app.add_option("--mask-command", o.mask_command, "Process provider command (env MIFGSM_MASK_COMMAND wins)");
  app.add_option("--mask-endpoint", o.mask_endpoint, "HTTP provider base URL (env MIFGSM_MASK_ENDPOINT wins)");
  app.add_option("--mask-dir", o.mask_dir, "Directory of precomputed <id>_mask.png files");
  app.add_flag("--merge-instances", o.merge_instances, "Union all proposals above the quality threshold");
  app.add_flag("--fallback-full", o.fallback_full, "Use a full-frame mask when no object is found");
  app.add_option("--stride", o.stride, "Keep every n-th frame");
  app.add_option("--offset", o.offset, "First kept frame position");
  app.add_option("--side", o.side, "Victim input side in pixels");
  app.add_option("--resample", o.resample, "Resize filter")->check(CLI::IsMember({"bilinear", "area", "nearest"}));
  app.add_option("--aspect", o.aspect, "Aspect policy")->check(CLI::IsMember({"stretch", "center_crop"}));
  app.add_option("--epsilon", o.epsilon, "Step size in pixel units");
  app.add_option("--max-iters", o.max_iters, "Iteration cap");
  app.add_option("--loss-threshold", o.loss_threshold, "Early-stop loss level");
  app.add_option("--prob-floor", o.prob_floor, "Probability treated as zero");
  app.add_option("--mode", o.mode, "Attack mode")->check(CLI::IsMember({"untargeted", "targeted"}));
  app.add_option("--target", o.target, "Target label for targeted mode");
  app.add_flag("--strict-u8", o.strict_u8, "Quantize every iterate to 8 bits");
  app.add_option("--split-ratio", o.split_ratio, "Train fraction");
  app.add_option("--split-seed", o.split_seed, "Split seed");
  app.add_option("--split-strategy", o.split_strategy, "Split strategy")
      ->check(CLI::IsMember({"random", "positional"}));

  auto* prepare = app.add_subcommand("prepare", "Scan, subsample and resize frames; write manifests");
  auto* mask = app.add_subcommand("mask", "Acquire one object mask per prepared image");
  auto* attack = app.add_subcommand("attack", "Run the masked attack on every masked image");

  auto* export_gs = app.add_subcommand("export-gs", "Split cameras and export 3DGS training sets");
  std::vector<std::string> export_conditions{"original", "adversarial"};
  export_gs->add_option("--condition", export_conditions, "original and/or adversarial")
      ->check(CLI::IsMember({"original", "adversarial"}));

  auto* ingest = app.add_subcommand("ingest-renders", "Import renders from an external 3DGS trainer");
  std::string ingest_class, ingest_condition, ingest_dir;
  ingest->add_option("--object", ingest_class, "Object class")->required();
  ingest->add_option("--render-condition", ingest_condition, "original_model or adversarial_model")
      ->required()
      ->check(CLI::IsMember({"original_model", "adversarial_model"}));
  ingest->add_option("--dir", ingest_dir, "Directory holding <id>_render.png files")->required()->check(CLI::ExistingDirectory);

  auto* evaluate = app.add_subcommand("evaluate", "Classify images and renders; write reports");
  std::vector<std::string> eval_conditions{"original", "adversarial", "render_original", "render_adversarial"};
  evaluate->add_option("--condition", eval_conditions, "Conditions to evaluate")
      ->check(CLI::IsMember({"original", "adversarial", "render_original", "render_adversarial"}));

  auto* report = app.add_subcommand("report", "Rebuild reports from stored predictions");
  bool plot = false;
  report->add_flag("--plot", plot, "Also draw a top-1 bar chart (PNG)");

  CLI11_PARSE(app, argc, argv);

  std::ofstream log_file;
  std::mutex log_mutex;
  log::set_sink([&](log::Level level, std::string_view msg) {
    std::lock_guard lock(log_mutex);
    if (!quiet || level != log::Level::info) std::cerr << level_name(level) << ": " << msg << '\n';
    if (log_file) log_file << level_name(level) << ": " << msg << '\n' << std::flush;
  });

  try {
    json raw = json::object();
    std::string config_text;
    fs::path config_dir = fs::current_path();
    if (!config_path.empty()) {
      config_text = read_file(config_path);
      try {
        raw = json::parse(config_text);
      } catch (const json::exception& e) {
        throw ConfigError("malformed config " + config_path + ": " + e.what());
      }
      config_dir = fs::absolute(config_path).parent_path();
    }
    const json effective = apply_overrides(raw, o, config_dir);
    const RunConfig config = RunConfig::from_json(effective, config_dir);
    if (config_text.empty()) config_text = effective.dump(2) + "\n";

    auto* sub = app.get_subcommands().front();
    RunLayout layout;
    if (!run_dir.empty()) {
      layout.root = run_dir;
      layout.create();
    } else if (sub == prepare) {
      layout = new_run(config);
    } else {
      layout.root = latest_run(config);
    }
    record_config(layout, config_text, overwrite_config);
    if (effective != raw) record_provenance(layout, "overrides", effective);

    log_file.open(layout.logs() / (sub->get_name() + ".log"), std::ios::app);
    log::info("run directory " + layout.root.string());

    CommandOutcome outcome;
    if (sub == prepare) {
      outcome = cmd_prepare(config, layout);
    } else if (sub == mask) {
      outcome = cmd_mask(config, layout);
    } else if (sub == attack) {
      outcome = cmd_attack(config, layout);
    } else if (sub == export_gs) {
      std::vector<ExportCondition> conds;
      for (const auto& c : export_conditions) conds.push_back(export_condition_from_string(c));
      outcome = cmd_export_gs(config, layout, conds);
    } else if (sub == ingest) {
      outcome = cmd_ingest_renders(config, layout, ingest_class, render_condition_from_string(ingest_condition),
                                   ingest_dir);
    } else if (sub == evaluate) {
      std::vector<Condition> conds;
      for (const auto& c : eval_conditions) conds.push_back(condition_from_string(c));
      outcome = cmd_evaluate(config, layout, conds);
    } else {
      outcome = cmd_report(config, layout, plot);
    }
    outcome.summary["run_dir"] = layout.root.string();
    std::cout << outcome.summary.dump(2) << '\n';
    return outcome.exit_code;
  } catch (const Error& e) {
    log::error(e.kind() + ": " + e.what());
    return kExitFatal;
  } catch (const std::exception& e) {
    log::error(std::string("internal: ") + e.what());
    return kExitFatal;
  }
}
