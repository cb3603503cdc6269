#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mifgsm/ingest.hpp"

namespace mifgsm {

enum class Condition { original, adversarial, render_original, render_adversarial };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

struct PredictionRecord {
  std::string image_id;
  std::string object;
  Condition condition = Condition::original;
  Split split = Split::unassigned;
  int true_label_id = 0;
  std::vector<double> probs;
  int top1_id = 0;
  std::vector<int> top5_ids;  // min(5, |labels|) entries, top5_ids[0] == top1_id

  nlohmann::json to_json() const;
  static PredictionRecord from_json(const nlohmann::json& j);
};

// Fills top1_id / top5_ids from probs.
PredictionRecord make_prediction(std::string image_id, std::string object, Condition condition, Split split,
                                 int true_label_id, std::vector<double> probs);

struct MetricRow {
  std::string object;  // "Average" for aggregate rows
  Condition condition = Condition::original;
  Split split = Split::unassigned;
  int n = 0;
  int n_misclassified = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  // Mean probs[true] over all records (headline value).
  std::optional<double> confidence1;
  // Mean probs[true] over correctly classified records only; absent when
  // there are none.
  std::optional<double> confidence1_correct;
  // Mean probs[top1] over misclassified records; absent when there are none.
  std::optional<double> confidence2;
  // Aggregate rows only: set when object rows had unequal n and the
  // aggregate is record-weighted.
  bool weighted = false;
};

// Throws ParameterError on an empty or heterogeneous (object, condition,
// split) list.
MetricRow evaluate_set(std::span<const PredictionRecord> records);

// Unweighted mean of the rows when all share n, record-weighted otherwise.
MetricRow aggregate_rows(std::span<const MetricRow> rows);

struct EvaluationReport {
  Condition condition = Condition::original;
  std::vector<MetricRow> rows;        // sorted by (object, split)
  std::vector<MetricRow> aggregates;  // one per split present

  nlohmann::json to_json() const;
  static EvaluationReport from_json(const nlohmann::json& j);
};

// Groups records by (object, split). All records must share one condition.
EvaluationReport build_report(std::span<const PredictionRecord> records);

struct DeltaRow {
  std::string object;
  Split split = Split::unassigned;
  double d_top1 = 0.0;
  double d_top5 = 0.0;
  std::optional<double> d_confidence1;
  std::optional<double> d_confidence2;
};

struct DegradationTable {
  Condition baseline = Condition::original;
  Condition attacked = Condition::adversarial;
  std::vector<DeltaRow> rows;
  std::vector<DeltaRow> aggregates;

  nlohmann::json to_json() const;
};

// attacked - baseline, per (object, split). Throws AlignmentError when the
// row keys differ.
DegradationTable compare_conditions(const EvaluationReport& baseline, const EvaluationReport& attacked);

enum class ReportFormat { json, csv, markdown };
std::string extension(ReportFormat f);

// Single-condition report. Columns:
//   object | split | n | confidence1 | top1 | top5 | confidence2 [| confidence1_correct]
// Fixed three decimals; absent values print as "-" (null in JSON).
std::string render_report(const EvaluationReport& report, ReportFormat format);

// Side-by-side table, original vs attacked:
//   object | confidence1 | top1 | top5 | confidence2 | top1 | top5
// left from the baseline report, right from the attacked report.
std::string render_table(const EvaluationReport& baseline, const EvaluationReport& attacked, ReportFormat format);

std::string render_comparison(const DegradationTable& table, ReportFormat format);

// Writes text to path, warning when the report has no rows.
void emit_report(const EvaluationReport& report, ReportFormat format, const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

std::string format_fixed3(double v);

}  // namespace mifgsm
