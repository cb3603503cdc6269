#include <cmath>
#include <fstream>
#include <numbers>

#include "mifgsm/errors.hpp"
#include "mifgsm/prng.hpp"
#include "mifgsm/simd/kernels.hpp"
#include "mifgsm/victim.hpp"

namespace mifgsm {

ReferenceClassifier::ReferenceClassifier(ClassVocabulary vocab, int input_side, int grid,
                                         std::vector<double> weights, std::vector<double> bias)
    : vocab_(std::move(vocab)),
      side_(input_side),
      grid_(grid),
      cell_(grid > 0 ? input_side / grid : 0),
      weights_(std::move(weights)),
      bias_(std::move(bias)) {
  vocab_.validate();
  if (grid_ <= 0 || side_ <= 0 || side_ % grid_ != 0) {
    throw ParameterError("input side " + std::to_string(side_) + " must be a positive multiple of grid " +
                         std::to_string(grid_));
  }
  const std::size_t k = vocab_.labels.size();
  if (weights_.size() != k * static_cast<std::size_t>(feature_count()) || bias_.size() != k) {
    throw ParameterError("reference classifier weights do not match " + std::to_string(k) + " classes x " +
                         std::to_string(feature_count()) + " features");
  }
}

ReferenceClassifier ReferenceClassifier::zeros(ClassVocabulary vocab, int input_side, int grid) {
  const std::size_t k = vocab.labels.size();
  const std::size_t f = static_cast<std::size_t>(grid) * grid;
  return ReferenceClassifier(std::move(vocab), input_side, grid, std::vector<double>(k * f, 0.0),
                             std::vector<double>(k, 0.0));
}

ReferenceClassifier ReferenceClassifier::random(ClassVocabulary vocab, std::uint64_t seed, double scale,
                                                int input_side, int grid) {
  const std::size_t k = vocab.labels.size();
  const std::size_t f = static_cast<std::size_t>(grid) * grid;
  std::vector<double> w(k * f);
  SplitMix64 rng(seed);
  // Box-Muller, two normals per pair of uniforms.
  for (std::size_t i = 0; i < w.size(); i += 2) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    w[i] = scale * r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < w.size()) w[i + 1] = scale * r * std::sin(2.0 * std::numbers::pi * u2);
  }
  return ReferenceClassifier(std::move(vocab), input_side, grid, std::move(w), std::vector<double>(k, 0.0));
}

void ReferenceClassifier::check_input(const FloatImage& image) const {
  if (image.width != side_ || image.height != side_ ||
      image.data.size() != static_cast<std::size_t>(side_) * side_ * 3) {
    throw ContractError("reference classifier expects " + std::to_string(side_) + "x" + std::to_string(side_) +
                        " input, got " + std::to_string(image.width) + "x" + std::to_string(image.height));
  }
}

std::vector<double> ReferenceClassifier::features(const FloatImage& image) const {
  check_input(image);
  std::vector<double> sums(static_cast<std::size_t>(feature_count()), 0.0);
  for (int y = 0; y < side_; ++y) {
    const float* row = image.data.data() + static_cast<std::size_t>(y) * side_ * 3;
    double* cells = sums.data() + static_cast<std::size_t>(y / cell_) * grid_;
    for (int x = 0; x < side_; ++x) {
      cells[x / cell_] += static_cast<double>(row[3 * x]) + row[3 * x + 1] + row[3 * x + 2];
    }
  }
  const double norm = 3.0 * cell_ * cell_ * 127.5;
  for (double& s : sums) s = s / norm - 1.0;
  return sums;
}

std::vector<double> ReferenceClassifier::logits(const FloatImage& image) const {
  const auto f = features(image);
  const auto& k = simd::active_kernels();
  const auto nf = static_cast<std::size_t>(feature_count());
  std::vector<double> z(vocab_.labels.size());
  for (std::size_t c = 0; c < z.size(); ++c) z[c] = k.dot(weights_.data() + c * nf, f.data(), nf) + bias_[c];
  return z;
}

std::vector<double> ReferenceClassifier::predict(const FloatImage& image) { return softmax(logits(image)); }

LossGradient ReferenceClassifier::loss_and_gradient(const FloatImage& image, int label_id) {
  if (label_id < 0 || label_id >= vocab_.size()) throw ParameterError("label id out of range");
  const auto z = logits(image);
  LossGradient out;
  out.probs = softmax(z);
  out.loss = cross_entropy_from_logits(z, label_id);

  // d loss / d f = W^T (p - onehot)
  const auto& k = simd::active_kernels();
  const auto nf = static_cast<std::size_t>(feature_count());
  std::vector<double> df(nf, 0.0);
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double dz = out.probs[c] - (static_cast<int>(c) == label_id ? 1.0 : 0.0);
    k.axpy(dz, weights_.data() + c * nf, df.data(), nf);
  }

  const double scale = 1.0 / (3.0 * cell_ * cell_ * 127.5);
  out.grad = FloatImage(side_, side_);
  for (int y = 0; y < side_; ++y) {
    float* row = out.grad.data.data() + static_cast<std::size_t>(y) * side_ * 3;
    const double* cells = df.data() + static_cast<std::size_t>(y / cell_) * grid_;
    for (int x = 0; x < side_; ++x) {
      const auto g = static_cast<float>(cells[x / cell_] * scale);
      row[3 * x] = row[3 * x + 1] = row[3 * x + 2] = g;
    }
  }
  return out;
}

std::span<const double> ReferenceClassifier::weights_row(int class_id) const {
  const auto nf = static_cast<std::size_t>(feature_count());
  return {weights_.data() + static_cast<std::size_t>(class_id) * nf, nf};
}

std::span<double> ReferenceClassifier::weights_row(int class_id) {
  const auto nf = static_cast<std::size_t>(feature_count());
  return {weights_.data() + static_cast<std::size_t>(class_id) * nf, nf};
}

nlohmann::json ReferenceClassifier::describe() const {
  return {{"kind", "reference"},
          {"model", "logistic-regression-gray-pool"},
          {"input_side", side_},
          {"grid", grid_},
          {"classes", vocab_.size()}};
}

nlohmann::json ReferenceClassifier::to_json() const {
  return {{"vocabulary", vocab_.to_json()},
          {"input_side", side_},
          {"grid", grid_},
          {"weights", weights_},
          {"bias", bias_}};
}

ReferenceClassifier ReferenceClassifier::from_json(const nlohmann::json& j) {
  try {
    return ReferenceClassifier(ClassVocabulary::from_json(j.at("vocabulary")), j.at("input_side").get<int>(),
                               j.at("grid").get<int>(), j.at("weights").get<std::vector<double>>(),
                               j.at("bias").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed reference classifier: ") + e.what());
  }
}

void ReferenceClassifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

ReferenceClassifier ReferenceClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed reference classifier " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace mifgsm
