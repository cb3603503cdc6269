#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mifgsm/errors.hpp"
#include "mifgsm/hash.hpp"
#include "mifgsm/logging.hpp"
#include "mifgsm/pipeline.hpp"
#include "support.hpp"

using namespace mifgsm;
using testsupport::TempDir;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSide = 32;

void write_class_frames(const fs::path& dir, int count, unsigned seed) {
  fs::create_directories(dir);
  std::mt19937 rng(seed);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame%06d.png", i);
    io::write_png(dir / name, testsupport::random_image(48, 40, rng));
  }
}

RunConfig small_config(const TempDir& t, std::vector<std::string> classes, int frames = 201) {
  RunConfig c;
  unsigned seed = 1;
  for (const auto& cls : classes) {
    write_class_frames(t / ("data/" + cls), frames, seed++);
    c.classes[cls] = t / ("data/" + cls);
  }
  c.prepare.side = kSide;
  c.victim.seed = 11;
  c.victim.scale = 0.5;
  c.attack.max_iters = 30;
  c.output_root = t / "runs";
  return c;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<std::string> hashes_in(const fs::path& dir, const std::string& suffix) {
  std::vector<std::string> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > suffix.size() && name.ends_with(suffix)) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(f.filename().string() + ":" + sha256_file(f));
  return out;
}

class DownProvider : public SegmentationProvider {
 public:
  std::vector<MaskProposal> propose(const RgbImage&) override { throw ProviderError("connection refused"); }
  std::string name() const override { return "down"; }
};

struct WarningCapture {
  std::vector<std::string> warnings;
  log::Sink prev;
  WarningCapture() {
    prev = log::set_sink([this](log::Level l, std::string_view s) {
      if (l == log::Level::warn) warnings.emplace_back(s);
    });
  }
  ~WarningCapture() { log::set_sink(prev); }
};

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config JSON round trip and validation") {
    TempDir t("cfg");
    const json j = {{"classes", {{"apple", "data/apple"}}},
                    {"victim", {{"kind", "reference"}, {"seed", 3}}},
                    {"mask_provider", {{"kind", "full"}, {"merge_instances", true}}},
                    {"ingest", {{"stride", 5}, {"side", 64}}},
                    {"attack", {{"epsilon", 2.0}, {"max_iters", 10}}},
                    {"split", {{"ratio", 0.85}, {"seed", 4}, {"strategy", "positional"}}},
                    {"workers", 2}};
    const auto c = RunConfig::from_json(j, t.path());
    CHECK(c.classes.at("apple") == t / "data/apple");
    CHECK(c.masks.acquire.merge_instances);
    CHECK(c.attack.epsilon == 2.0);
    CHECK(c.split_strategy == SplitStrategy::positional);
    CHECK(c.workers == 2);
    const auto again = RunConfig::from_json(c.to_json());
    CHECK(again.to_json() == c.to_json());
    CHECK_THROWS_AS(RunConfig::from_json(json::object()), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"classes", {{"a", "x"}}}, {"workers", 0}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"classes", 5}}), ConfigError);
  }

  TEST_CASE("config copy is verbatim and guarded") {
    TempDir t("cfg");
    RunLayout layout{t / "run"};
    layout.create();
    record_config(layout, "{ \"a\" : 1 }\n");
    record_config(layout, "{ \"a\" : 1 }\n");
    CHECK_THROWS_AS(record_config(layout, "{}"), ConfigError);
    record_config(layout, "{}", true);
    std::ifstream in(layout.root / "config.json");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "{}");
  }

  TEST_CASE("new runs follow the timestamp-tag layout") {
    TempDir t("layout");
    RunConfig c;
    c.output_root = t.path();
    c.tag = "sweep";
    const auto layout = new_run(c);
    const auto name = layout.root.filename().string();
    CHECK(name.size() == std::string("20240101-120000-sweep").size());
    CHECK(name.ends_with("-sweep"));
    for (const char* sub : {"manifests", "masks", "adv", "exports", "renders", "reports", "logs"}) {
      CHECK(fs::is_directory(layout.root / sub));
    }
  }

  TEST_CASE("prepare: one manifest per class, idempotent, missing directory named") {
    TempDir t("prepare");
    auto c = small_config(t, default_object_classes());
    RunLayout layout{t / "run"};
    layout.create();
    const auto out = cmd_prepare(c, layout);
    CHECK(out.exit_code == kExitOk);
    CHECK(out.summary["classes"].size() == 8);
    for (const auto& cls : default_object_classes()) {
      REQUIRE(fs::exists(layout.manifest(cls)));
      CHECK(read_manifest(layout.manifest(cls)).records.size() == 41);
    }
    const auto before = hashes_in(layout.root / "manifests", ".json");
    cmd_prepare(c, layout);
    CHECK(hashes_in(layout.root / "manifests", ".json") == before);

    c.classes["ghost"] = t / "data/ghost";
    try {
      cmd_prepare(c, layout);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
  }

  TEST_CASE("mask: counts, resumability, provider failure") {
    TempDir t("mask");
    auto c = small_config(t, {"hydrant"});
    RunLayout layout{t / "run"};
    layout.create();
    cmd_prepare(c, layout);

    int created = 0;
    auto counting = [&]() -> std::unique_ptr<SegmentationProvider> {
      ++created;
      return std::make_unique<FullFrameProvider>();
    };
    auto first = cmd_mask(c, layout, counting);
    CHECK(first.exit_code == kExitOk);
    CHECK(first.summary["written"] == 41);
    CHECK(first.summary["provider_calls"] == 41);
    CHECK(hashes_in(layout.masks("hydrant"), "_mask.png").size() == 41);
    CHECK(hashes_in(layout.masks("hydrant"), "_mask.json").size() == 41);

    auto second = cmd_mask(c, layout, counting);
    CHECK(second.summary["provider_calls"] == 0);
    CHECK(second.summary["cached"] == 41);

    RunLayout fresh{t / "run2"};
    fresh.create();
    cmd_prepare(c, fresh);
    c.masks.retries = 2;
    auto down = cmd_mask(c, fresh, [] { return std::make_unique<DownProvider>(); });
    CHECK(down.exit_code == kExitFatal);
    CHECK(down.summary["failed"] == 41);
    CHECK(down.summary["failures"].size() == 41);
    CHECK(down.summary["failures"][0]["kind"] == "provider");
    CHECK(down.summary["provider_calls"] == 41 * 3);
    CHECK(fs::exists(fresh.logs() / "mask_summary.json"));
  }

  TEST_CASE("mask from precomputed files") {
    TempDir t("maskfiles");
    auto c = small_config(t, {"apple"}, 10);
    c.prepare.stride = 1;
    RunLayout layout{t / "run"};
    layout.create();
    cmd_prepare(c, layout);
    const auto m = read_manifest(layout.manifest("apple"));
    for (std::size_t i = 0; i + 1 < m.records.size(); ++i) {
      ObjectMask om;
      om.mask = BinaryMask::full(kSide, kSide);
      save_mask(t / ("premade/apple/" + mask_filename(m.records[i].id)), om);
    }
    c.masks.kind = "files";
    c.masks.directory = t / "premade";
    const auto out = cmd_mask(c, layout);
    CHECK(out.exit_code == kExitPartial);
    CHECK(out.summary["written"] == 9);
    CHECK(out.summary["failures"][0]["kind"] == "io");
  }

  TEST_CASE("attack: counts, determinism, missing mask, worker invariance") {
    TempDir t("attack");
    auto c = small_config(t, default_object_classes());
    RunLayout layout{t / "run"};
    layout.create();
    cmd_prepare(c, layout);
    cmd_mask(c, layout);

    const auto out = cmd_attack(c, layout);
    CHECK(out.exit_code == kExitOk);
    CHECK(out.summary["adversarial_images"] == 328);
    CHECK(out.summary["skipped"] == 0);
    CHECK(out.summary["noise_linf_max"].get<double>() <= 30.0);
    const auto hashes = hashes_in(layout.root / "adv", "_adv.png");
    CHECK(hashes.size() == 328);
    CHECK(hashes_in(layout.root / "adv", "_trace.json").size() == 328);

    // Cached outputs are reported without recomputation.
    const auto cached = cmd_attack(c, layout);
    CHECK(cached.summary["outputs"][0]["cached"] == true);

    // Recompute from scratch, with four workers, and compare.
    fs::remove_all(layout.root / "adv");
    c.workers = 4;
    cmd_attack(c, layout);
    CHECK(hashes_in(layout.root / "adv", "_adv.png") == hashes);

    fs::remove_all(layout.root / "adv");
    const auto m = read_manifest(layout.manifest("couch"));
    fs::remove(layout.masks("couch") / mask_filename(m.records[7].id));
    const auto partial = cmd_attack(c, layout);
    CHECK(partial.exit_code == kExitPartial);
    CHECK(partial.summary["adversarial_images"] == 327);
    REQUIRE(partial.summary["skips"].size() == 1);
    CHECK(partial.summary["skips"][0]["image_id"] == m.records[7].id);
    CHECK(partial.summary["skips"][0]["kind"] == "missing_mask");
  }

  TEST_CASE("targeted attack needs a known target label") {
    TempDir t("targeted");
    auto c = small_config(t, {"mouse"}, 20);
    RunLayout layout{t / "run"};
    layout.create();
    cmd_prepare(c, layout);
    cmd_mask(c, layout);
    c.attack.mode = AttackMode::targeted;
    c.target_label = "zebra";
    CHECK_THROWS_AS(cmd_attack(c, layout), ConfigError);
    c.target_label = "toaster";
    const auto out = cmd_attack(c, layout);
    CHECK(out.exit_code == kExitOk);
    CHECK(out.summary["config"]["target_label_id"] == default_vocabulary().index_of("toaster"));
  }

  TEST_CASE("full flow: export, renders, evaluation, report") {
    TempDir t("flow");
    auto c = small_config(t, {"apple", "cake"});
    RunLayout layout{t / "run"};
    layout.create();
    cmd_prepare(c, layout);
    cmd_mask(c, layout);

    {
      // Evaluating before any adversarial image exists: one condition only.
      WarningCapture w;
      const auto only = cmd_evaluate(c, layout, {Condition::original});
      CHECK(only.exit_code == kExitOk);
      CHECK(only.summary["tables"].empty());
      CHECK(fs::exists(layout.reports() / "report_original.md"));
      CHECK_FALSE(fs::exists(layout.reports() / "table_images.csv"));
      const auto both = cmd_evaluate(c, layout, {Condition::original, Condition::adversarial});
      CHECK(both.summary["tables"].empty());
      bool warned = false;
      for (const auto& s : w.warnings) warned = warned || s.find("no comparison") != std::string::npos;
      CHECK(warned);
    }
    CHECK_THROWS_AS(cmd_evaluate(c, layout, {Condition::render_original}), ParameterError);

    cmd_attack(c, layout);
    const auto ex = cmd_export_gs(c, layout, {ExportCondition::original, ExportCondition::adversarial});
    CHECK(ex.exit_code == kExitOk);
    CHECK(ex.summary["exports"].size() == 4);
    CHECK(hashes_in(layout.exports("apple") / "adversarial" / "images", ".png").size() == 35);
    const auto split = SplitAssignment::from_json(read_json(layout.exports("apple") / "split.json"));
    CHECK(split.test_ids.size() == 6);

    // Stand-in for the external trainer: renders are the training inputs.
    for (const std::string cls : {"apple", "cake"}) {
      const auto m = read_manifest(layout.manifest(cls));
      for (RenderCondition rc : {RenderCondition::original_model, RenderCondition::adversarial_model}) {
        const auto dir = t / ("trainer/" + cls + "/" + to_string(rc));
        for (const auto& e : m.records) {
          const auto src = rc == RenderCondition::original_model ? layout.manifests_dir() / e.prepared_path
                                                                 : layout.adv(cls) / adversarial_filename(e.id);
          io::write_png(dir / render_filename(e.id), io::read_rgb(src));
        }
        const auto in = cmd_ingest_renders(c, layout, cls, rc, dir);
        CHECK(in.summary["train"] == 35);
        CHECK(in.summary["test"] == 6);
      }
    }
    CHECK_THROWS_AS(cmd_ingest_renders(c, layout, "couch", RenderCondition::original_model, t.path()), ConfigError);

    const auto ev = cmd_evaluate(c, layout,
                                 {Condition::original, Condition::adversarial, Condition::render_original,
                                  Condition::render_adversarial});
    CHECK(ev.exit_code == kExitOk);
    CHECK(ev.summary["tables"] == json::array({"images", "renders"}));
    for (const char* ext : {".csv", ".json", ".md"}) {
      CHECK(fs::exists(layout.reports() / (std::string("table_images") + ext)));
      CHECK(fs::exists(layout.reports() / (std::string("table_renders") + ext)));
      CHECK(fs::exists(layout.reports() / (std::string("report_render_adversarial") + ext)));
    }
    std::ifstream csv(layout.reports() / "table_renders.csv");
    int lines = 0;
    for (std::string l; std::getline(csv, l);) ++lines;
    CHECK(lines == 1 + 4 + 2);

    // Renders identical to the inputs classify identically.
    const auto images = read_json(layout.reports() / "report_adversarial.json");
    const auto renders = read_json(layout.reports() / "report_render_adversarial.json");
    CHECK(images["aggregates"].size() == 1);
    CHECK(renders["aggregates"].size() == 2);

    const auto before = read_json(layout.reports() / "report_render_original.json");
    const auto rep = cmd_report(c, layout, true);
    CHECK(rep.exit_code == kExitOk);
    CHECK(fs::exists(layout.reports() / "top1_by_condition.png"));
    CHECK(read_json(layout.reports() / "report_render_original.json") == before);

    const auto provenance = read_json(layout.root / "run.json");
    for (const char* key : {"prepare", "mask_provider", "victim", "split", "simd"}) CHECK(provenance.contains(key));
  }

  TEST_CASE("report without predictions is a parameter error") {
    TempDir t("report");
    RunLayout layout{t / "run"};
    layout.create();
    CHECK_THROWS_AS(cmd_report(RunConfig{}, layout, false), ParameterError);
  }
}
