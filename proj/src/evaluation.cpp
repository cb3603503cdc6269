#include "mifgsm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "mifgsm/errors.hpp"
#include "mifgsm/logging.hpp"
#include "mifgsm/victim.hpp"

namespace mifgsm {

std::string to_string(Condition c) {
  switch (c) {
    case Condition::original:
      return "original";
    case Condition::adversarial:
      return "adversarial";
    case Condition::render_original:
      return "render_original";
    case Condition::render_adversarial:
      return "render_adversarial";
  }
  return "original";
}

Condition condition_from_string(const std::string& s) {
  for (Condition c : {Condition::original, Condition::adversarial, Condition::render_original,
                      Condition::render_adversarial}) {
    if (s == to_string(c)) return c;
  }
  throw ParameterError("unknown evaluation condition: " + s);
}

nlohmann::json PredictionRecord::to_json() const {
  return {{"image_id", image_id}, {"object", object},       {"condition", to_string(condition)},
          {"split", to_string(split)}, {"true_label_id", true_label_id}, {"probs", probs},
          {"top1_id", top1_id},   {"top5_ids", top5_ids}};
}

PredictionRecord PredictionRecord::from_json(const nlohmann::json& j) {
  try {
    PredictionRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.object = j.at("object").get<std::string>();
    r.condition = condition_from_string(j.at("condition").get<std::string>());
    r.split = split_from_string(j.at("split").get<std::string>());
    r.true_label_id = j.at("true_label_id").get<int>();
    r.probs = j.at("probs").get<std::vector<double>>();
    r.top1_id = j.at("top1_id").get<int>();
    r.top5_ids = j.at("top5_ids").get<std::vector<int>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prediction record: ") + e.what());
  }
}

PredictionRecord make_prediction(std::string image_id, std::string object, Condition condition, Split split,
                                 int true_label_id, std::vector<double> probs) {
  if (true_label_id < 0 || static_cast<std::size_t>(true_label_id) >= probs.size()) {
    throw ParameterError("true label id out of range for " + image_id);
  }
  PredictionRecord r;
  r.image_id = std::move(image_id);
  r.object = std::move(object);
  r.condition = condition;
  r.split = split;
  r.true_label_id = true_label_id;
  const int k = static_cast<int>(std::min<std::size_t>(5, probs.size()));
  for (const auto& [id, p] : topk(probs, k)) r.top5_ids.push_back(id);
  r.top1_id = r.top5_ids.front();
  r.probs = std::move(probs);
  return r;
}

namespace {

// Sums in ascending order so results do not depend on record order.
double ordered_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

double ordered_mean(std::vector<double> values) {
  const auto n = static_cast<double>(values.size());
  return ordered_sum(std::move(values)) / n;
}

std::optional<double> optional_mean(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  return ordered_mean(std::move(values));
}

int split_rank(Split s) { return static_cast<int>(s); }

}  // namespace

MetricRow evaluate_set(std::span<const PredictionRecord> records) {
  if (records.empty()) throw ParameterError("cannot evaluate an empty record set");
  const auto& first = records.front();
  MetricRow row;
  row.object = first.object;
  row.condition = first.condition;
  row.split = first.split;
  row.n = static_cast<int>(records.size());

  int hit1 = 0;
  int hit5 = 0;
  std::vector<double> conf_all, conf_correct, conf_wrong;
  for (const auto& r : records) {
    if (r.object != first.object || r.condition != first.condition || r.split != first.split) {
      throw ParameterError("record set mixes (object, condition, split) groups");
    }
    if (r.true_label_id < 0 || static_cast<std::size_t>(r.true_label_id) >= r.probs.size()) {
      throw ParameterError("true label out of range in " + r.image_id);
    }
    const double p_true = r.probs[static_cast<std::size_t>(r.true_label_id)];
    conf_all.push_back(p_true);
    if (r.top1_id == r.true_label_id) {
      ++hit1;
      conf_correct.push_back(p_true);
    } else {
      conf_wrong.push_back(r.probs[static_cast<std::size_t>(r.top1_id)]);
    }
    if (std::find(r.top5_ids.begin(), r.top5_ids.end(), r.true_label_id) != r.top5_ids.end()) ++hit5;
  }
  row.n_misclassified = row.n - hit1;
  row.top1 = static_cast<double>(hit1) / row.n;
  row.top5 = static_cast<double>(hit5) / row.n;
  row.confidence1 = ordered_mean(conf_all);
  row.confidence1_correct = optional_mean(conf_correct);
  row.confidence2 = optional_mean(conf_wrong);
  return row;
}

MetricRow aggregate_rows(std::span<const MetricRow> rows) {
  if (rows.empty()) throw ParameterError("cannot aggregate zero rows");
  MetricRow out;
  out.object = "Average";
  out.condition = rows.front().condition;
  out.split = rows.front().split;
  const bool equal_n = std::all_of(rows.begin(), rows.end(), [&](const MetricRow& r) { return r.n == rows.front().n; });
  out.weighted = !equal_n;

  std::vector<double> t1, t5, c1, c1c, c2;
  double w_total = 0.0, w_correct = 0.0, w_wrong = 0.0;
  for (const auto& r : rows) {
    out.n += r.n;
    out.n_misclassified += r.n_misclassified;
    const double w = equal_n ? 1.0 : r.n;
    const double wc = equal_n ? 1.0 : r.n - r.n_misclassified;
    const double ww = equal_n ? 1.0 : r.n_misclassified;
    t1.push_back(w * r.top1);
    t5.push_back(w * r.top5);
    w_total += w;
    if (r.confidence1) c1.push_back(w * *r.confidence1);
    if (r.confidence1_correct) {
      c1c.push_back(wc * *r.confidence1_correct);
      w_correct += wc;
    }
    if (r.confidence2) {
      c2.push_back(ww * *r.confidence2);
      w_wrong += ww;
    }
  }
  auto wmean = [](std::vector<double> v, double w) -> std::optional<double> {
    if (v.empty() || w <= 0.0) return std::nullopt;
    return ordered_sum(std::move(v)) / w;
  };
  out.top1 = *wmean(t1, w_total);
  out.top5 = *wmean(t5, w_total);
  out.confidence1 = wmean(c1, w_total);
  out.confidence1_correct = wmean(c1c, w_correct);
  out.confidence2 = wmean(c2, w_wrong);
  return out;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

nlohmann::json row_json(const MetricRow& r) {
  return {{"object", r.object},       {"split", to_string(r.split)}, {"n", r.n},
          {"n_misclassified", r.n_misclassified}, {"top1", r.top1}, {"top5", r.top5},
          {"confidence1", opt(r.confidence1)}, {"confidence1_correct", opt(r.confidence1_correct)},
          {"confidence2", opt(r.confidence2)}, {"weighted", r.weighted}};
}

MetricRow row_from(const nlohmann::json& j, Condition c) {
  MetricRow r;
  r.object = j.at("object").get<std::string>();
  r.condition = c;
  r.split = split_from_string(j.at("split").get<std::string>());
  r.n = j.at("n").get<int>();
  r.n_misclassified = j.value("n_misclassified", 0);
  r.top1 = j.at("top1").get<double>();
  r.top5 = j.at("top5").get<double>();
  r.confidence1 = opt_from(j, "confidence1");
  r.confidence1_correct = opt_from(j, "confidence1_correct");
  r.confidence2 = opt_from(j, "confidence2");
  r.weighted = j.value("weighted", false);
  return r;
}

}  // namespace

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json rj = nlohmann::json::array(), aj = nlohmann::json::array();
  for (const auto& r : rows) rj.push_back(row_json(r));
  for (const auto& r : aggregates) aj.push_back(row_json(r));
  return {{"condition", to_string(condition)}, {"rows", rj}, {"aggregates", aj}};
}

EvaluationReport EvaluationReport::from_json(const nlohmann::json& j) {
  try {
    EvaluationReport rep;
    rep.condition = condition_from_string(j.at("condition").get<std::string>());
    for (const auto& r : j.at("rows")) rep.rows.push_back(row_from(r, rep.condition));
    for (const auto& r : j.at("aggregates")) rep.aggregates.push_back(row_from(r, rep.condition));
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

EvaluationReport build_report(std::span<const PredictionRecord> records) {
  EvaluationReport rep;
  if (records.empty()) return rep;
  rep.condition = records.front().condition;
  std::map<std::pair<std::string, int>, std::vector<PredictionRecord>> groups;
  for (const auto& r : records) {
    if (r.condition != rep.condition) throw ParameterError("report records mix conditions");
    groups[{r.object, split_rank(r.split)}].push_back(r);
  }
  for (const auto& [key, recs] : groups) rep.rows.push_back(evaluate_set(recs));
  std::stable_sort(rep.rows.begin(), rep.rows.end(), [](const MetricRow& a, const MetricRow& b) {
    return std::tie(a.object, a.split) < std::tie(b.object, b.split);
  });
  for (Split s : {Split::train, Split::test, Split::unassigned}) {
    std::vector<MetricRow> part;
    for (const auto& r : rep.rows) {
      if (r.split == s) part.push_back(r);
    }
    if (!part.empty()) rep.aggregates.push_back(aggregate_rows(part));
  }
  return rep;
}

namespace {

std::optional<double> diff(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *b - *a;
}

DeltaRow delta(const MetricRow& a, const MetricRow& b) {
  return {a.object, a.split, b.top1 - a.top1, b.top5 - a.top5, diff(a.confidence1, b.confidence1),
          diff(a.confidence2, b.confidence2)};
}

std::vector<DeltaRow> align(const std::vector<MetricRow>& a, const std::vector<MetricRow>& b, const char* what) {
  std::map<std::pair<std::string, int>, const MetricRow*> index;
  for (const auto& r : b) index[{r.object, split_rank(r.split)}] = &r;
  if (index.size() != a.size() || b.size() != a.size()) {
    throw AlignmentError(std::string(what) + " rows differ between the compared reports");
  }
  std::vector<DeltaRow> out;
  for (const auto& r : a) {
    auto it = index.find({r.object, split_rank(r.split)});
    if (it == index.end()) {
      throw AlignmentError("row (" + r.object + ", " + to_string(r.split) + ") has no counterpart");
    }
    out.push_back(delta(r, *it->second));
  }
  return out;
}

nlohmann::json delta_json(const DeltaRow& d) {
  return {{"object", d.object}, {"split", to_string(d.split)}, {"d_top1", d.d_top1},
          {"d_top5", d.d_top5}, {"d_confidence1", opt(d.d_confidence1)}, {"d_confidence2", opt(d.d_confidence2)}};
}

}  // namespace

DegradationTable compare_conditions(const EvaluationReport& baseline, const EvaluationReport& attacked) {
  DegradationTable t;
  t.baseline = baseline.condition;
  t.attacked = attacked.condition;
  t.rows = align(baseline.rows, attacked.rows, "object");
  t.aggregates = align(baseline.aggregates, attacked.aggregates, "aggregate");
  return t;
}

nlohmann::json DegradationTable::to_json() const {
  nlohmann::json rj = nlohmann::json::array(), aj = nlohmann::json::array();
  for (const auto& r : rows) rj.push_back(delta_json(r));
  for (const auto& r : aggregates) aj.push_back(delta_json(r));
  return {{"baseline", to_string(baseline)}, {"attacked", to_string(attacked)}, {"rows", rj}, {"aggregates", aj}};
}

std::string extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::json:
      return ".json";
    case ReportFormat::csv:
      return ".csv";
    case ReportFormat::markdown:
      return ".md";
  }
  return ".txt";
}

std::string format_fixed3(double v) {
  if (v == 0.0) v = 0.0;  // no "-0.000"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s(buf);
  return s == "-0.000" ? "0.000" : s;
}

namespace {

constexpr double kConfidenceGap = 0.001;

std::string cell(const std::optional<double>& v) { return v ? format_fixed3(*v) : "-"; }

nlohmann::json rounded(const std::optional<double>& v) {
  if (!v) return nullptr;
  return std::round(*v * 1000.0) / 1000.0;
}

std::string display_name(const MetricRow& r) {
  if (r.split == Split::train) return r.object + " (Train)";
  if (r.split == Split::test) return r.object + " (Test)";
  return r.object;
}

std::optional<double> correct_only_if_distinct(const MetricRow& r) {
  if (r.confidence1 && r.confidence1_correct && std::abs(*r.confidence1 - *r.confidence1_correct) > kConfidenceGap) {
    return r.confidence1_correct;
  }
  return std::nullopt;
}

std::string join(const std::vector<std::string>& cells, const std::string& sep, const std::string& pre = "",
                 const std::string& post = "") {
  std::string out = pre;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? sep : "") + cells[i];
  return out + post + "\n";
}

std::string tabulate(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& body,
                     ReportFormat format, const std::string& note) {
  std::string out;
  if (format == ReportFormat::csv) {
    out += join(header, ",");
    for (const auto& r : body) out += join(r, ",");
  } else {
    if (!note.empty()) out += "<!-- " + note + " -->\n\n";
    out += join(header, " | ", "| ", " |");
    out += join(std::vector<std::string>(header.size(), "---"), " | ", "| ", " |");
    for (const auto& r : body) out += join(r, " | ", "| ", " |");
  }
  return out;
}

const char* kNote = "confidence1 = mean probability of the true class over all records; "
                    "confidence2 = mean top-1 probability over misclassified records";

}  // namespace

std::string render_report(const EvaluationReport& report, ReportFormat format) {
  if (format == ReportFormat::json) {
    nlohmann::json rows = nlohmann::json::array(), aggs = nlohmann::json::array();
    auto to_j = [](const MetricRow& r) {
      return nlohmann::json{{"object", r.object},
                            {"split", to_string(r.split)},
                            {"n", r.n},
                            {"confidence1", rounded(r.confidence1)},
                            {"top1", rounded(r.top1)},
                            {"top5", rounded(r.top5)},
                            {"confidence2", rounded(r.confidence2)},
                            {"confidence1_correct_only", rounded(correct_only_if_distinct(r))},
                            {"weighted", r.weighted}};
    };
    for (const auto& r : report.rows) rows.push_back(to_j(r));
    for (const auto& r : report.aggregates) aggs.push_back(to_j(r));
    return nlohmann::json{{"condition", to_string(report.condition)}, {"note", kNote}, {"rows", rows}, {"aggregates", aggs}}
               .dump(2) + "\n";
  }
  const std::vector<std::string> header = {"object", "split", "n", "confidence1", "top1", "top5", "confidence2",
                                           "confidence1_correct_only"};
  std::vector<std::vector<std::string>> body;
  auto line = [](const MetricRow& r) {
    std::string object = r.object + (r.weighted ? "*" : "");
    return std::vector<std::string>{object, to_string(r.split), std::to_string(r.n), cell(r.confidence1),
                                    format_fixed3(r.top1), format_fixed3(r.top5), cell(r.confidence2),
                                    cell(correct_only_if_distinct(r))};
  };
  for (const auto& r : report.rows) body.push_back(line(r));
  for (const auto& r : report.aggregates) body.push_back(line(r));
  std::string note = std::string(kNote) + "; * marks a record-weighted average";
  return tabulate(header, body, format, note);
}

std::string render_table(const EvaluationReport& baseline, const EvaluationReport& attacked, ReportFormat format) {
  // Validates that both sides have the same keys.
  (void)compare_conditions(baseline, attacked);
  std::map<std::pair<std::string, int>, const MetricRow*> right;
  for (const auto& r : attacked.rows) right[{r.object, split_rank(r.split)}] = &r;
  for (const auto& r : attacked.aggregates) right[{r.object, split_rank(r.split)}] = &r;

  std::vector<std::pair<const MetricRow*, const MetricRow*>> pairs;
  for (const auto& r : baseline.rows) pairs.emplace_back(&r, right.at({r.object, split_rank(r.split)}));
  for (const auto& r : baseline.aggregates) pairs.emplace_back(&r, right.at({r.object, split_rank(r.split)}));

  if (format == ReportFormat::json) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [a, b] : pairs) {
      rows.push_back({{"object", a->object},
                      {"split", to_string(a->split)},
                      {to_string(baseline.condition),
                       {{"confidence1", rounded(a->confidence1)}, {"top1", rounded(a->top1)}, {"top5", rounded(a->top5)}}},
                      {to_string(attacked.condition),
                       {{"confidence2", rounded(b->confidence2)}, {"top1", rounded(b->top1)}, {"top5", rounded(b->top5)}}}});
    }
    return nlohmann::json{{"baseline", to_string(baseline.condition)},
                          {"attacked", to_string(attacked.condition)},
                          {"note", kNote},
                          {"rows", rows}}
               .dump(2) + "\n";
  }
  const std::vector<std::string> header = {"object", "confidence1", "top1", "top5", "confidence2", "top1", "top5"};
  std::vector<std::vector<std::string>> body;
  for (const auto& [a, b] : pairs) {
    body.push_back({display_name(*a), cell(a->confidence1), format_fixed3(a->top1), format_fixed3(a->top5),
                    cell(b->confidence2), format_fixed3(b->top1), format_fixed3(b->top5)});
  }
  const std::string note = std::string(kNote) + "; left: " + to_string(baseline.condition) +
                           ", right: " + to_string(attacked.condition);
  return tabulate(header, body, format, note);
}

std::string render_comparison(const DegradationTable& t, ReportFormat format) {
  if (format == ReportFormat::json) return t.to_json().dump(2) + "\n";
  const std::vector<std::string> header = {"object", "split", "d_top1", "d_top5", "d_confidence1", "d_confidence2"};
  std::vector<std::vector<std::string>> body;
  for (const auto* rows : {&t.rows, &t.aggregates}) {
    for (const auto& d : *rows) {
      body.push_back({d.object, to_string(d.split), format_fixed3(d.d_top1), format_fixed3(d.d_top5),
                      cell(d.d_confidence1), cell(d.d_confidence2)});
    }
  }
  return tabulate(header, body, format, to_string(t.attacked) + " minus " + to_string(t.baseline));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void emit_report(const EvaluationReport& report, ReportFormat format, const std::filesystem::path& path) {
  if (report.rows.empty()) log::warn("report for " + to_string(report.condition) + " has no rows");
  write_text(path, render_report(report, format));
}

}  // namespace mifgsm
