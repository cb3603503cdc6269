#include "mifgsm/victim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "mifgsm/errors.hpp"

namespace mifgsm {

void ClassVocabulary::validate() const {
  if (labels.empty()) throw ParameterError("vocabulary has no labels");
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw ParameterError("vocabulary contains an empty label");
    if (!seen.insert(l).second) throw ParameterError("duplicate vocabulary label: " + l);
  }
  const auto first = prompt_template.find("{}");
  if (first == std::string::npos || prompt_template.find("{}", first + 2) != std::string::npos) {
    throw ParameterError("prompt template needs exactly one '{}': " + prompt_template);
  }
}

int ClassVocabulary::index_of(const std::string& label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

std::string ClassVocabulary::prompt(int class_id) const {
  if (class_id < 0 || class_id >= size()) throw ParameterError("class id out of range");
  std::string out = prompt_template;
  const auto pos = out.find("{}");
  if (pos != std::string::npos) out.replace(pos, 2, labels[static_cast<std::size_t>(class_id)]);
  return out;
}

nlohmann::json ClassVocabulary::to_json() const { return {{"labels", labels}, {"template", prompt_template}}; }

ClassVocabulary ClassVocabulary::from_json(const nlohmann::json& j) {
  ClassVocabulary v;
  try {
    if (j.is_array()) {
      v.labels = j.get<std::vector<std::string>>();
    } else {
      v.labels = j.at("labels").get<std::vector<std::string>>();
      v.prompt_template = j.value("template", v.prompt_template);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed vocabulary: ") + e.what());
  }
  v.validate();
  return v;
}

ClassVocabulary ClassVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed vocabulary " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

const std::vector<std::string>& default_object_classes() {
  static const std::vector<std::string> classes = {"apple",     "cake",       "couch", "hairdryer",
                                                   "hydrant",   "motorcycle", "mouse", "suitcase"};
  return classes;
}

ClassVocabulary default_vocabulary() {
  static const std::vector<std::string> co3d = {
      "apple",     "backpack",  "ball",      "banana",    "baseballbat", "baseballglove", "bench",
      "bicycle",   "book",      "bottle",    "bowl",      "broccoli",    "cake",          "car",
      "carrot",    "cellphone", "chair",     "couch",     "cup",         "donut",         "frisbee",
      "hairdryer", "handbag",   "hotdog",    "hydrant",   "keyboard",    "kite",          "laptop",
      "microwave", "motorcycle", "mouse",    "orange",    "parkingmeter", "pizza",        "plant",
      "remote",    "sandwich",  "skateboard", "stopsign", "suitcase",    "teddybear",     "toaster",
      "toilet",    "toybus",    "toyplane",  "toytrain",  "toytruck",    "tv",            "umbrella",
      "vase",      "wineglass"};
  ClassVocabulary v;
  v.labels = default_object_classes();
  for (const auto& c : co3d) {
    if (v.index_of(c) < 0) v.labels.push_back(c);
  }
  return v;
}

std::vector<std::pair<int, double>> topk(std::span<const double> probs, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > probs.size()) {
    throw ParameterError("top-k needs 1 <= k <= " + std::to_string(probs.size()) + ", got " + std::to_string(k));
  }
  std::vector<int> ids(probs.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](int a, int b) {
    const double pa = probs[static_cast<std::size_t>(a)];
    const double pb = probs[static_cast<std::size_t>(b)];
    return pa > pb || (pa == pb && a < b);
  });
  std::vector<std::pair<int, double>> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.emplace_back(ids[static_cast<std::size_t>(i)], probs[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])]);
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += (out[i] = std::exp(logits[i] - peak));
  for (double& v : out) v /= total;
  return out;
}

double cross_entropy_from_logits(std::span<const double> logits, int label_id) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  return peak + std::log(total) - logits[static_cast<std::size_t>(label_id)];
}

}  // namespace mifgsm
