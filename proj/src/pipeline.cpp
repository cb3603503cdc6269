#include "mifgsm/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mifgsm/errors.hpp"
#include "mifgsm/hash.hpp"
#include "mifgsm/logging.hpp"
#include "mifgsm/simd/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mifgsm {

// ---------------------------------------------------------------------------
// Configuration

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
  RunConfig c;
  try {
    for (const auto& [cls, dir] : j.at("classes").items()) c.classes[cls] = resolve(base, dir.get<std::string>());
    c.vocabulary = resolve(base, j.value("vocabulary", std::string()));
    c.output_root = resolve(base, j.value("output_root", std::string("runs")));
    c.tag = j.value("tag", c.tag);
    c.workers = j.value("workers", 1);

    if (j.contains("victim")) {
      const auto& v = j["victim"];
      c.victim.kind = v.value("kind", c.victim.kind);
      c.victim.endpoint = v.value("endpoint", std::string());
      c.victim.weights = resolve(base, v.value("weights", std::string()));
      c.victim.seed = v.value("seed", std::uint64_t{0});
      c.victim.scale = v.value("scale", c.victim.scale);
      c.victim.options = v.value("options", json::object());
    }
    if (j.contains("mask_provider")) {
      const auto& m = j["mask_provider"];
      c.masks.kind = m.value("kind", c.masks.kind);
      c.masks.command = m.value("command", std::string());
      c.masks.endpoint = m.value("endpoint", std::string());
      c.masks.directory = resolve(base, m.value("directory", std::string()));
      c.masks.acquire.merge_instances = m.value("merge_instances", false);
      c.masks.acquire.merge_threshold = m.value("merge_threshold", 0.5);
      c.masks.acquire.fallback_full = m.value("fallback_full", false);
      c.masks.retries = m.value("retries", 1);
    }
    if (j.contains("ingest")) {
      const auto& i = j["ingest"];
      c.prepare.stride = i.value("stride", c.prepare.stride);
      c.prepare.offset = i.value("offset", c.prepare.offset);
      c.prepare.side = i.value("side", c.prepare.side);
      c.prepare.resample = resample_from_string(i.value("resample", std::string("bilinear")));
      c.prepare.aspect = aspect_from_string(i.value("aspect", std::string("stretch")));
      c.prepare.seed = i.value("seed", std::uint64_t{0});
    }
    if (j.contains("attack")) {
      c.attack = AttackConfig::from_json(j["attack"]);
      c.target_label = j["attack"].value("target_label", std::string());
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      c.split_ratio = s.value("ratio", c.split_ratio);
      c.split_seed = s.value("seed", std::uint64_t{0});
      c.split_strategy = split_strategy_from_string(s.value("strategy", std::string("random")));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  if (c.classes.empty()) throw ConfigError("run config lists no classes");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  return from_json(read_json(path), fs::absolute(path).parent_path());
}

json RunConfig::to_json() const {
  json classes_j = json::object();
  for (const auto& [k, v] : classes) classes_j[k] = v.string();
  json attack_j = attack.to_json();
  attack_j["target_label"] = target_label;
  return {{"classes", classes_j},
          {"vocabulary", vocabulary.string()},
          {"output_root", output_root.string()},
          {"tag", tag},
          {"workers", workers},
          {"victim",
           {{"kind", victim.kind},
            {"endpoint", victim.endpoint},
            {"weights", victim.weights.string()},
            {"seed", victim.seed},
            {"scale", victim.scale},
            {"options", victim.options}}},
          {"mask_provider",
           {{"kind", masks.kind},
            {"command", masks.command},
            {"endpoint", masks.endpoint},
            {"directory", masks.directory.string()},
            {"merge_instances", masks.acquire.merge_instances},
            {"merge_threshold", masks.acquire.merge_threshold},
            {"fallback_full", masks.acquire.fallback_full},
            {"retries", masks.retries}}},
          {"ingest",
           {{"stride", prepare.stride},
            {"offset", prepare.offset},
            {"side", prepare.side},
            {"resample", to_string(prepare.resample)},
            {"aspect", to_string(prepare.aspect)},
            {"seed", prepare.seed}}},
          {"attack", attack_j},
          {"split", {{"ratio", split_ratio}, {"seed", split_seed}, {"strategy", to_string(split_strategy)}}}};
}

ClassVocabulary RunConfig::load_vocabulary() const {
  return vocabulary.empty() ? default_vocabulary() : ClassVocabulary::load(vocabulary);
}

// ---------------------------------------------------------------------------
// Run directory

void RunLayout::create() const {
  for (const char* sub : {"manifests", "prepared", "masks", "adv", "exports", "renders", "predictions", "reports", "logs"}) {
    fs::create_directories(root / sub);
  }
}

RunLayout new_run(const RunConfig& config) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  RunLayout layout{config.output_root / (std::string(stamp) + "-" + config.tag)};
  layout.create();
  return layout;
}

void record_config(const RunLayout& layout, const std::string& text, bool overwrite) {
  const fs::path dest = layout.root / "config.json";
  if (fs::exists(dest) && !overwrite) {
    std::ifstream in(dest, std::ios::binary);
    std::stringstream existing;
    existing << in.rdbuf();
    if (existing.str() != text) {
      throw ConfigError("run directory " + layout.root.string() + " was created with a different config");
    }
    return;
  }
  write_text(dest, text);
}

void record_provenance(const RunLayout& layout, const std::string& key, const json& value) {
  const fs::path path = layout.root / "run.json";
  json j = fs::exists(path) ? read_json(path) : json::object();
  j["tool"] = "mifgsm";
  j["simd"] = std::string(simd::isa_name(simd::active_kernels().isa));
  j[key] = value;
  write_json(path, j);
}

// ---------------------------------------------------------------------------
// Factories

std::unique_ptr<VictimModel> make_victim(const RunConfig& config) {
  ClassVocabulary vocab = config.load_vocabulary();
  if (config.victim.kind == "reference") {
    if (!config.victim.weights.empty()) {
      auto model = std::make_unique<ReferenceClassifier>(ReferenceClassifier::load(config.victim.weights));
      if (model->vocabulary().labels != vocab.labels) {
        throw ConfigError("reference weights were trained for a different vocabulary");
      }
      return model;
    }
    return std::make_unique<ReferenceClassifier>(
        ReferenceClassifier::random(std::move(vocab), config.victim.seed, config.victim.scale, config.prepare.side));
  }
  if (config.victim.kind == "http") {
    return std::make_unique<HttpVictim>(env_or("MIFGSM_VICTIM_ENDPOINT", config.victim.endpoint), std::move(vocab),
                                        config.victim.options);
  }
  throw ConfigError("unknown victim kind: " + config.victim.kind);
}

std::unique_ptr<SegmentationProvider> make_provider(const RunConfig& config) {
  const auto& m = config.masks;
  if (m.kind == "full") return std::make_unique<FullFrameProvider>();
  if (m.kind == "process") return std::make_unique<ProcessProvider>(env_or("MIFGSM_MASK_COMMAND", m.command));
  if (m.kind == "http") return std::make_unique<HttpProvider>(env_or("MIFGSM_MASK_ENDPOINT", m.endpoint));
  if (m.kind == "files") return nullptr;
  throw ConfigError("unknown mask provider kind: " + m.kind);
}

// ---------------------------------------------------------------------------
// Worker pool

namespace {

// Runs fn(session, i) for i in [0, count) on up to `workers` threads, each
// owning the session returned by make(). Sessions are never shared.
template <class MakeSession, class Fn>
void run_pool(std::size_t count, int workers, MakeSession make, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    try {
      auto session = make();
      for (std::size_t i = next++; i < count; i = next++) fn(session, i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = count;
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, workers));
  if (n == 1 || count <= 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(n, count); ++t) pool.emplace_back(body);
  }
  if (failure) std::rethrow_exception(failure);
}

DatasetManifest load_class_manifest(const RunLayout& layout, const std::string& cls) {
  const fs::path p = layout.manifest(cls);
  if (!fs::exists(p)) throw ConfigError("no manifest for class '" + cls + "'; run prepare first");
  return read_manifest(p);
}

RgbImage load_prepared(const RunLayout& layout, const ManifestEntry& e) {
  return io::read_rgb(layout.manifests_dir() / e.prepared_path);
}

json failure_json(const std::string& cls, const std::string& id, const std::string& kind, const std::string& what) {
  return {{"class", cls}, {"image_id", id}, {"kind", kind}, {"message", what}};
}

int exit_for(std::size_t failures, std::size_t successes) {
  if (failures == 0) return kExitOk;
  return successes == 0 ? kExitFatal : kExitPartial;
}

}  // namespace

// ---------------------------------------------------------------------------
// prepare

CommandOutcome cmd_prepare(const RunConfig& config, const RunLayout& layout) {
  for (const auto& [cls, dir] : config.classes) {
    if (!fs::is_directory(dir)) throw ConfigError("class '" + cls + "': source directory missing: " + dir.string());
  }
  CommandOutcome out;
  json classes = json::object();
  for (const auto& [cls, dir] : config.classes) {
    const DatasetManifest m = prepare_dataset(dir, cls, config.prepare, layout.prepared(cls), layout.manifests_dir());
    write_manifest(layout.manifest(cls), m);
    classes[cls] = {{"records", m.records.size()},
                    {"source_count", m.source_count},
                    {"manifest_sha256", sha256_file(layout.manifest(cls))}};
    log::info("prepared " + cls + ": " + std::to_string(m.records.size()) + " of " + std::to_string(m.source_count) +
              " frames");
  }
  out.summary = {{"command", "prepare"}, {"classes", classes}};
  write_json(layout.logs() / "prepare_summary.json", out.summary);
  record_provenance(layout, "prepare", {{"seed", config.prepare.seed}, {"stride", config.prepare.stride}});
  return out;
}

// ---------------------------------------------------------------------------
// mask

CommandOutcome cmd_mask(const RunConfig& config, const RunLayout& layout, const ProviderFactory& factory) {
  struct Job {
    std::string cls;
    ManifestEntry entry;
  };
  std::vector<Job> jobs;
  for (const auto& [cls, dir] : config.classes) {
    const DatasetManifest m = load_class_manifest(layout, cls);
    for (const auto& e : m.records) jobs.push_back({cls, e});
  }

  std::atomic<std::size_t> written{0}, cached{0};
  std::mutex mu;
  json failures = json::array();
  std::vector<json> failure_slots(jobs.size());
  std::atomic<int> provider_calls{0};

  const bool from_files = config.masks.kind == "files" && !factory;
  auto make = [&]() -> std::unique_ptr<SegmentationProvider> {
    if (factory) return factory();
    return make_provider(config);
  };

  std::string provider_name = from_files ? "files:" + config.masks.directory.string() : "";
  run_pool(jobs.size(), config.workers, make, [&](std::unique_ptr<SegmentationProvider>& provider, std::size_t i) {
    const Job& job = jobs[i];
    const fs::path mask_path = layout.masks(job.cls) / mask_filename(job.entry.id);
    const fs::path meta_path = layout.masks(job.cls) / (job.entry.id + "_mask.json");
    if (fs::exists(mask_path) && fs::exists(meta_path)) {
      ++cached;
      return;
    }
    try {
      ImageRecord rec;
      rec.id = job.entry.id;
      rec.class_label = job.cls;
      rec.frame_index = job.entry.frame_index;
      rec.pixels = load_prepared(layout, job.entry);

      ObjectMask mask;
      if (from_files) {
        fs::path src = config.masks.directory / job.cls / mask_filename(rec.id);
        if (!fs::exists(src)) src = config.masks.directory / mask_filename(rec.id);
        mask = load_mask(src, rec.id, rec.pixels.width, rec.pixels.height);
      } else {
        {
          std::lock_guard lock(mu);
          if (provider_name.empty()) provider_name = provider->name();
        }
        for (int attempt = 0;; ++attempt) {
          try {
            ++provider_calls;
            mask = acquire_mask(rec, *provider, config.masks.acquire);
            break;
          } catch (const ProviderError&) {
            if (attempt >= config.masks.retries) throw;
          }
        }
      }
      save_mask(mask_path, mask);
      write_json(meta_path, mask_metadata_json(mask));
      ++written;
    } catch (const Error& e) {
      failure_slots[i] = failure_json(job.cls, job.entry.id, e.kind(), e.what());
    } catch (const std::exception& e) {
      failure_slots[i] = failure_json(job.cls, job.entry.id, "internal", e.what());
    }
  });
  for (auto& f : failure_slots) {
    if (!f.is_null()) failures.push_back(std::move(f));
  }

  CommandOutcome out;
  out.exit_code = exit_for(failures.size(), written + cached);
  out.summary = {{"command", "mask"},
                 {"provider", provider_name},
                 {"written", written.load()},
                 {"cached", cached.load()},
                 {"provider_calls", provider_calls.load()},
                 {"failed", failures.size()},
                 {"failures", failures}};
  write_json(layout.logs() / "mask_summary.json", out.summary);
  record_provenance(layout, "mask_provider", {{"name", provider_name}, {"kind", config.masks.kind}});
  for (const auto& f : failures) log::error("mask " + f["image_id"].get<std::string>() + ": " + f["message"].get<std::string>());
  return out;
}

// ---------------------------------------------------------------------------
// attack

CommandOutcome cmd_attack(const RunConfig& config, const RunLayout& layout, const VictimFactory& factory) {
  const ClassVocabulary vocab = config.load_vocabulary();
  AttackConfig attack = config.attack;
  if (attack.mode == AttackMode::targeted) {
    const int t = vocab.index_of(config.target_label);
    if (t < 0) throw ConfigError("target label '" + config.target_label + "' is not in the vocabulary");
    attack.target_label_id = t;
  }

  struct Job {
    std::string cls;
    int label = 0;
    ManifestEntry entry;
  };
  std::vector<Job> jobs;
  for (const auto& [cls, dir] : config.classes) {
    const int label = vocab.index_of(cls);
    if (label < 0) throw ConfigError("class '" + cls + "' is not in the vocabulary");
    attack.validate(label, vocab.size());
    const DatasetManifest m = load_class_manifest(layout, cls);
    for (const auto& e : m.records) jobs.push_back({cls, label, e});
  }

  struct Outcome {
    json skip;
    json result;
  };
  std::vector<Outcome> outcomes(jobs.size());
  json victim_desc;
  std::mutex mu;

  auto make = [&]() -> std::unique_ptr<VictimModel> {
    auto v = factory ? factory() : make_victim(config);
    std::lock_guard lock(mu);
    if (victim_desc.is_null()) victim_desc = v->describe();
    return v;
  };

  run_pool(jobs.size(), config.workers, make, [&](std::unique_ptr<VictimModel>& victim, std::size_t i) {
    const Job& job = jobs[i];
    const fs::path adv_path = layout.adv(job.cls) / adversarial_filename(job.entry.id);
    const fs::path trace_path = layout.adv(job.cls) / trace_filename(job.entry.id);
    const fs::path mask_path = layout.masks(job.cls) / mask_filename(job.entry.id);
    try {
      if (!fs::exists(mask_path)) {
        outcomes[i].skip = failure_json(job.cls, job.entry.id, "missing_mask", "no mask at " + mask_path.string());
        return;
      }
      if (fs::exists(adv_path) && fs::exists(trace_path)) {
        const json t = read_json(trace_path);
        outcomes[i].result = {{"class", job.cls},
                              {"image_id", job.entry.id},
                              {"cached", true},
                              {"stopped_early", t.value("stopped_early", false)},
                              {"iterations_run", t.value("iterations_run", 0)},
                              {"linf", t["noise"].value("linf", 0.0)},
                              {"l0_fraction", t["noise"].value("l0_fraction", 0.0)},
                              {"sha256", sha256_file(adv_path)}};
        return;
      }
      const RgbImage image = load_prepared(layout, job.entry);
      const ObjectMask mask = load_mask(mask_path, job.entry.id, image.width, image.height);
      const AttackResult r = run_attack(image, mask.mask, *victim, job.label, attack);
      io::write_png(adv_path, r.adversarial);
      json trace = trace_to_json(r, attack, job.label);
      trace["image_id"] = job.entry.id;
      trace["class"] = job.cls;
      write_json(trace_path, trace);
      outcomes[i].result = {{"class", job.cls},
                            {"image_id", job.entry.id},
                            {"cached", false},
                            {"stopped_early", r.stopped_early},
                            {"iterations_run", r.iterations_run},
                            {"linf", r.noise_linf},
                            {"l0_fraction", r.noise_l0_fraction},
                            {"sha256", sha256_file(adv_path)}};
    } catch (const Error& e) {
      outcomes[i].skip = failure_json(job.cls, job.entry.id, e.kind(), e.what());
    }
  });

  json skips = json::array(), results = json::array();
  std::size_t early = 0;
  double linf_max = 0.0, l0_sum = 0.0;
  for (auto& o : outcomes) {
    if (!o.skip.is_null()) skips.push_back(std::move(o.skip));
    if (!o.result.is_null()) {
      early += o.result["stopped_early"].get<bool>() ? 1 : 0;
      linf_max = std::max(linf_max, o.result["linf"].get<double>());
      l0_sum += o.result["l0_fraction"].get<double>();
      results.push_back(std::move(o.result));
    }
  }

  CommandOutcome out;
  out.exit_code = exit_for(skips.size(), results.size());
  out.summary = {{"command", "attack"},
                 {"victim", victim_desc},
                 {"config", attack.to_json()},
                 {"kernels", std::string(simd::isa_name(simd::active_kernels().isa))},
                 {"adversarial_images", results.size()},
                 {"skipped", skips.size()},
                 {"stopped_early", early},
                 {"noise_linf_max", linf_max},
                 {"noise_l0_fraction_mean", results.empty() ? 0.0 : l0_sum / static_cast<double>(results.size())},
                 {"skips", skips},
                 {"outputs", results}};
  write_json(layout.adv("") / "summary.json", out.summary);
  record_provenance(layout, "victim", victim_desc);
  for (const auto& s : skips) log::warn("attack skipped " + s["image_id"].get<std::string>() + ": " + s["message"].get<std::string>());
  return out;
}

// ---------------------------------------------------------------------------
// export-gs

CommandOutcome cmd_export_gs(const RunConfig& config, const RunLayout& layout,
                             const std::vector<ExportCondition>& conditions) {
  CommandOutcome out;
  json exports = json::array(), failures = json::array();
  for (const auto& [cls, dir] : config.classes) {
    const DatasetManifest m = load_class_manifest(layout, cls);
    const SplitAssignment split = make_split(m, config.split_ratio, config.split_seed, config.split_strategy);
    write_json(layout.exports(cls) / "split.json", split.to_json());
    for (ExportCondition c : conditions) {
      try {
        const ExportDescriptor d = export_training_set(m, split, c, {layout.manifests_dir(), layout.adv(cls)},
                                                       layout.exports(cls) / to_string(c));
        exports.push_back({{"class", cls},
                           {"condition", to_string(c)},
                           {"files", d.files.size()},
                           {"held_out", d.held_out_ids.size()},
                           {"manifest_sha256", d.manifest_sha256}});
      } catch (const Error& e) {
        failures.push_back({{"class", cls}, {"condition", to_string(c)}, {"kind", e.kind()}, {"message", e.what()}});
        log::error("export " + cls + "/" + to_string(c) + ": " + e.what());
      }
    }
  }
  out.exit_code = exit_for(failures.size(), exports.size());
  out.summary = {{"command", "export-gs"}, {"exports", exports}, {"failures", failures}};
  write_json(layout.logs() / "export_summary.json", out.summary);
  record_provenance(layout, "split", {{"ratio", config.split_ratio},
                                      {"seed", config.split_seed},
                                      {"strategy", to_string(config.split_strategy)},
                                      {"prng", "splitmix64"}});
  return out;
}

// ---------------------------------------------------------------------------
// ingest-renders

CommandOutcome cmd_ingest_renders(const RunConfig& config, const RunLayout& layout, const std::string& cls,
                                  RenderCondition condition, const fs::path& render_dir) {
  if (!config.classes.count(cls)) throw ConfigError("class '" + cls + "' is not in the run config");
  const fs::path split_path = layout.exports(cls) / "split.json";
  if (!fs::exists(split_path)) throw ConfigError("no split for '" + cls + "'; run export-gs first");
  const SplitAssignment split = SplitAssignment::from_json(read_json(split_path));

  const auto renders = ingest_renders(render_dir, split, condition, config.prepare.side);
  const fs::path dest = layout.renders(cls, condition);
  fs::remove_all(dest);
  fs::create_directories(dest);
  json index = json::array();
  std::size_t n_train = 0, n_test = 0;
  for (const auto& r : renders) {
    const fs::path file = dest / render_filename(r.image_id);
    io::write_png(file, r.pixels);
    index.push_back({{"image_id", r.image_id},
                     {"split", to_string(r.split)},
                     {"file", file.filename().string()},
                     {"source", r.source_path.string()},
                     {"sha256", sha256_file(file)}});
    (r.split == Split::train ? n_train : n_test)++;
  }
  write_json(dest / "renders.json", {{"class", cls}, {"condition", to_string(condition)}, {"renders", index}});

  CommandOutcome out;
  out.summary = {{"command", "ingest-renders"},
                 {"class", cls},
                 {"condition", to_string(condition)},
                 {"train", n_train},
                 {"test", n_test}};
  write_json(layout.logs() / ("ingest_" + cls + "_" + to_string(condition) + ".json"), out.summary);
  return out;
}

// ---------------------------------------------------------------------------
// evaluate / report

namespace {

struct EvalInput {
  std::string cls;
  std::string id;
  Split split = Split::unassigned;
  fs::path path;
};

std::vector<EvalInput> collect_inputs(const RunConfig& config, const RunLayout& layout, Condition c) {
  std::vector<EvalInput> inputs;
  for (const auto& [cls, dir] : config.classes) {
    if (c == Condition::original || c == Condition::adversarial) {
      if (!fs::exists(layout.manifest(cls))) continue;
      const DatasetManifest m = read_manifest(layout.manifest(cls));
      for (const auto& e : m.records) {
        const fs::path p = c == Condition::original ? layout.manifests_dir() / e.prepared_path
                                                    : layout.adv(cls) / adversarial_filename(e.id);
        if (fs::exists(p)) {
          inputs.push_back({cls, e.id, Split::unassigned, p});
        } else if (c == Condition::adversarial) {
          log::warn("no adversarial image for " + cls + "/" + e.id);
        }
      }
    } else {
      const auto rc = c == Condition::render_original ? RenderCondition::original_model : RenderCondition::adversarial_model;
      const fs::path dir_r = layout.renders(cls, rc);
      if (!fs::exists(dir_r / "renders.json")) continue;
      const json index = read_json(dir_r / "renders.json");
      for (const auto& r : index.at("renders")) {
        inputs.push_back({cls, r.at("image_id").get<std::string>(), split_from_string(r.at("split").get<std::string>()),
                          dir_r / r.at("file").get<std::string>()});
      }
    }
  }
  return inputs;
}

std::vector<PredictionRecord> load_predictions(const fs::path& path) {
  std::vector<PredictionRecord> out;
  const json doc = read_json(path);
  for (const auto& r : doc.at("records")) out.push_back(PredictionRecord::from_json(r));
  return out;
}

void emit_all(const RunLayout& layout, const EvaluationReport& rep) {
  for (ReportFormat f : {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown}) {
    emit_report(rep, f, layout.reports() / ("report_" + to_string(rep.condition) + extension(f)));
  }
}

json emit_pairs(const RunLayout& layout, const std::map<Condition, EvaluationReport>& reports) {
  json emitted = json::array();
  const std::pair<Condition, Condition> pairs[] = {{Condition::original, Condition::adversarial},
                                                   {Condition::render_original, Condition::render_adversarial}};
  for (const auto& [a, b] : pairs) {
    const bool has_a = reports.count(a) > 0, has_b = reports.count(b) > 0;
    if (has_a != has_b) {
      log::warn("only " + to_string(has_a ? a : b) + " is available; no comparison against " + to_string(has_a ? b : a));
    }
    if (!has_a || !has_b) continue;
    const auto& ra = reports.at(a);
    const auto& rb = reports.at(b);
    try {
      const DegradationTable t = compare_conditions(ra, rb);
      const std::string stem = a == Condition::original ? "images" : "renders";
      for (ReportFormat f : {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown}) {
        write_text(layout.reports() / ("table_" + stem + extension(f)), render_table(ra, rb, f));
        write_text(layout.reports() / ("compare_" + to_string(a) + "_vs_" + to_string(b) + extension(f)),
                   render_comparison(t, f));
      }
      emitted.push_back(stem);
    } catch (const AlignmentError& e) {
      log::warn(std::string("cannot compare conditions: ") + e.what());
    }
  }
  return emitted;
}

json report_summary(const EvaluationReport& rep) {
  json aggs = json::array();
  for (const auto& a : rep.aggregates) {
    aggs.push_back({{"split", to_string(a.split)},
                    {"n", a.n},
                    {"top1", a.top1},
                    {"top5", a.top5},
                    {"confidence1", a.confidence1 ? json(*a.confidence1) : json(nullptr)},
                    {"confidence2", a.confidence2 ? json(*a.confidence2) : json(nullptr)}});
  }
  return aggs;
}

}  // namespace

CommandOutcome cmd_evaluate(const RunConfig& config, const RunLayout& layout, const std::vector<Condition>& conditions,
                            const VictimFactory& factory) {
  const ClassVocabulary vocab = config.load_vocabulary();
  std::map<Condition, std::vector<EvalInput>> inputs;
  std::size_t total = 0;
  for (Condition c : conditions) {
    auto in = collect_inputs(config, layout, c);
    total += in.size();
    if (in.empty()) log::warn("no inputs for condition " + to_string(c));
    else inputs[c] = std::move(in);
  }
  if (total == 0) throw ParameterError("no evaluation inputs for the requested conditions");

  std::map<Condition, EvaluationReport> reports;
  json summary_conditions = json::object();
  json victim_desc;
  for (auto& [c, in] : inputs) {
    std::vector<PredictionRecord> preds(in.size());
    std::mutex mu;
    auto make = [&]() -> std::unique_ptr<VictimModel> {
      auto v = factory ? factory() : make_victim(config);
      std::lock_guard lock(mu);
      if (victim_desc.is_null()) victim_desc = v->describe();
      return v;
    };
    run_pool(in.size(), config.workers, make, [&](std::unique_ptr<VictimModel>& victim, std::size_t i) {
      const auto& item = in[i];
      const int label = vocab.index_of(item.cls);
      if (label < 0) throw ConfigError("class '" + item.cls + "' is not in the vocabulary");
      const RgbImage img = io::read_rgb(item.path);
      preds[i] = make_prediction(item.id, item.cls, c, item.split, label, victim->predict(img));
    });
    json records = json::array();
    for (const auto& p : preds) records.push_back(p.to_json());
    write_json(layout.predictions() / (to_string(c) + ".json"), {{"condition", to_string(c)}, {"records", records}});
    reports[c] = build_report(preds);
    emit_all(layout, reports[c]);
    summary_conditions[to_string(c)] = report_summary(reports[c]);
  }
  const json tables = emit_pairs(layout, reports);

  CommandOutcome out;
  out.summary = {{"command", "evaluate"}, {"victim", victim_desc}, {"conditions", summary_conditions}, {"tables", tables}};
  write_json(layout.logs() / "evaluate_summary.json", out.summary);
  record_provenance(layout, "evaluation_victim", victim_desc);
  return out;
}

namespace {

void draw_top1_chart(const std::map<Condition, EvaluationReport>& reports, const fs::path& path) {
  struct Bar {
    std::string label;
    double value;
  };
  std::vector<Bar> bars;
  for (const auto& [c, rep] : reports) {
    for (const auto& a : rep.aggregates) {
      std::string label = to_string(c);
      if (a.split != Split::unassigned) label += "/" + to_string(a.split);
      bars.push_back({label, a.top1});
    }
  }
  const int bar_w = 90, gap = 30, height = 360, margin = 40;
  const int width = std::max(320, margin * 2 + static_cast<int>(bars.size()) * (bar_w + gap));
  cv::Mat canvas(height + 120, width, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::line(canvas, {margin, margin + height}, {width - margin, margin + height}, cv::Scalar(0, 0, 0), 1);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const int x = margin + static_cast<int>(i) * (bar_w + gap) + gap / 2;
    const int h = static_cast<int>(bars[i].value * (height - 20));
    cv::rectangle(canvas, {x, margin + height - h}, {x + bar_w, margin + height}, cv::Scalar(180, 110, 40), cv::FILLED);
    cv::putText(canvas, format_fixed3(bars[i].value), {x + 10, margin + height - h - 6}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    cv::putText(canvas, bars[i].label, {x - 10, margin + height + 22 + static_cast<int>(i % 2) * 18},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  }
  cv::putText(canvas, "top-1 accuracy by condition", {margin, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.6, cv::Scalar(0, 0, 0), 1,
              cv::LINE_AA);
  fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), canvas)) throw IoError("cannot write " + path.string());
}

}  // namespace

CommandOutcome cmd_report(const RunConfig& config, const RunLayout& layout, bool plot) {
  (void)config;
  std::map<Condition, EvaluationReport> reports;
  json summary_conditions = json::object();
  for (Condition c : {Condition::original, Condition::adversarial, Condition::render_original,
                      Condition::render_adversarial}) {
    const fs::path p = layout.predictions() / (to_string(c) + ".json");
    if (!fs::exists(p)) continue;
    reports[c] = build_report(load_predictions(p));
    emit_all(layout, reports[c]);
    summary_conditions[to_string(c)] = report_summary(reports[c]);
  }
  if (reports.empty()) throw ParameterError("no stored predictions; run evaluate first");
  const json tables = emit_pairs(layout, reports);
  if (plot) draw_top1_chart(reports, layout.reports() / "top1_by_condition.png");

  CommandOutcome out;
  out.summary = {{"command", "report"}, {"conditions", summary_conditions}, {"tables", tables}, {"plot", plot}};
  write_json(layout.logs() / "report_summary.json", out.summary);
  return out;
}

}  // namespace mifgsm
