#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mifgsm/image.hpp"

namespace mifgsm {

// Ordered candidate label set; the index of a label is its class id.
struct ClassVocabulary {
  std::vector<std::string> labels;
  std::string prompt_template = "a photo of a {}";

  // Throws ParameterError on empty or duplicate labels, or a template
  // without exactly one "{}".
  void validate() const;
  int size() const noexcept { return static_cast<int>(labels.size()); }
  // -1 if absent.
  int index_of(const std::string& label) const;
  std::string prompt(int class_id) const;

  nlohmann::json to_json() const;
  static ClassVocabulary from_json(const nlohmann::json& j);
  // Accepts either {"labels": [...], "template": "..."} or a bare label list.
  static ClassVocabulary load(const std::filesystem::path& path);
};

// The eight objects of the evaluation set.
const std::vector<std::string>& default_object_classes();
// Default vocabulary: the eight objects followed by the remaining CO3D
// categories as distractors.
ClassVocabulary default_vocabulary();

struct LossGradient {
  double loss = 0.0;            // -log probs[label]
  std::vector<double> probs;    // softmax over the vocabulary
  FloatImage grad;              // d loss / d pixel, 8-bit pixel units
};

// Differentiable classifier over images in the [0,255] pixel domain.
// Instances are single-consumer: calls must not interleave across threads.
class VictimModel {
 public:
  virtual ~VictimModel() = default;

  virtual const ClassVocabulary& vocabulary() const = 0;
  virtual int input_side() const = 0;

  virtual std::vector<double> predict(const FloatImage& image) = 0;
  virtual LossGradient loss_and_gradient(const FloatImage& image, int label_id) = 0;

  // Identification recorded in run logs.
  virtual nlohmann::json describe() const = 0;

  std::vector<double> predict(const RgbImage& image) { return predict(FloatImage(image)); }
};

using VictimFactory = std::function<std::unique_ptr<VictimModel>()>;

// Top-k (class id, probability), descending by probability with ties broken
// by lower class id. Throws ParameterError unless 1 <= k <= probs.size().
std::vector<std::pair<int, double>> topk(std::span<const double> probs, int k);

// Numerically stable softmax and -log softmax[label].
std::vector<double> softmax(std::span<const double> logits);
double cross_entropy_from_logits(std::span<const double> logits, int label_id);

// Multinomial logistic regression over a grid x grid map of average-pooled,
// normalized grayscale. Feature f_c = (mean_gray_c / 255 - 0.5) / 0.5, so
// f in [-1,1]; logits = W f + b. Gradients are exact.
class ReferenceClassifier : public VictimModel {
 public:
  static constexpr int kDefaultGrid = 32;

  ReferenceClassifier(ClassVocabulary vocab, int input_side, int grid, std::vector<double> weights,
                      std::vector<double> bias);

  // Zero weights and bias: every prediction is uniform.
  static ReferenceClassifier zeros(ClassVocabulary vocab, int input_side = 224, int grid = kDefaultGrid);
  // Deterministic Gaussian weights, N(0, scale^2), bias zero.
  static ReferenceClassifier random(ClassVocabulary vocab, std::uint64_t seed, double scale = 0.05,
                                    int input_side = 224, int grid = kDefaultGrid);

  const ClassVocabulary& vocabulary() const override { return vocab_; }
  int input_side() const override { return side_; }
  int grid() const noexcept { return grid_; }
  int feature_count() const noexcept { return grid_ * grid_; }

  std::vector<double> features(const FloatImage& image) const;
  std::vector<double> logits(const FloatImage& image) const;
  std::vector<double> predict(const FloatImage& image) override;
  LossGradient loss_and_gradient(const FloatImage& image, int label_id) override;
  nlohmann::json describe() const override;

  using VictimModel::predict;

  std::span<const double> weights_row(int class_id) const;
  std::span<double> weights_row(int class_id);
  std::vector<double>& bias() noexcept { return bias_; }
  const std::vector<double>& bias() const noexcept { return bias_; }

  nlohmann::json to_json() const;
  static ReferenceClassifier from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ReferenceClassifier load(const std::filesystem::path& path);

 private:
  void check_input(const FloatImage& image) const;

  ClassVocabulary vocab_;
  int side_;
  int grid_;
  int cell_;
  std::vector<double> weights_;  // class-major, classes x grid*grid
  std::vector<double> bias_;
};

// Remote victim reached over HTTP/JSON. Construction queries GET /v1/info
//   -> {"model": "...", "labels": [...], "input_side": 224, "differentiable": true}
// and fails with CapabilityError if the backend cannot differentiate or with
// ConfigError if its labels differ from the vocabulary. Calls:
//   POST /v1/predict   {"width","height","pixels":[HWC floats]}          -> {"probs":[...]}
//   POST /v1/loss_grad {"width","height","pixels":[...],"label_id": k}   -> {"loss","probs","grad":[HWC]}
// Gradients are expected in 8-bit pixel units.
class HttpVictim : public VictimModel {
 public:
  HttpVictim(std::string endpoint, ClassVocabulary vocab, nlohmann::json options = nlohmann::json::object(),
             double timeout_seconds = 300.0);

  const ClassVocabulary& vocabulary() const override { return vocab_; }
  int input_side() const override { return side_; }
  std::vector<double> predict(const FloatImage& image) override;
  LossGradient loss_and_gradient(const FloatImage& image, int label_id) override;
  nlohmann::json describe() const override;

  using VictimModel::predict;

 private:
  nlohmann::json post(const std::string& route, const nlohmann::json& body);
  void check_input(const FloatImage& image) const;

  std::string endpoint_;
  ClassVocabulary vocab_;
  nlohmann::json options_;
  double timeout_;
  int side_ = 224;
  std::string model_name_;
};

}  // namespace mifgsm
