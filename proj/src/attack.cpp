#include "mifgsm/attack.hpp"

#include <algorithm>
#include <cmath>

#include "mifgsm/errors.hpp"
#include "mifgsm/logging.hpp"
#include "mifgsm/simd/kernels.hpp"

namespace mifgsm {

std::string to_string(AttackMode m) { return m == AttackMode::untargeted ? "untargeted" : "targeted"; }

AttackMode attack_mode_from_string(const std::string& s) {
  if (s == "untargeted") return AttackMode::untargeted;
  if (s == "targeted") return AttackMode::targeted;
  throw ParameterError("unknown attack mode: " + s);
}

void AttackConfig::validate(int true_label_id, int class_count) const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be > 0");
  if (max_iters < 1) throw ParameterError("max_iters must be >= 1");
  if (!(prob_floor > 0.0 && prob_floor < 1.0)) throw ParameterError("prob_floor must lie in (0,1)");
  if (true_label_id < 0 || true_label_id >= class_count) throw ParameterError("true label id out of range");
  if (mode == AttackMode::targeted) {
    if (!target_label_id) throw ParameterError("targeted attack needs a target label");
    if (*target_label_id < 0 || *target_label_id >= class_count) throw ParameterError("target label id out of range");
    if (*target_label_id == true_label_id) throw ParameterError("target label equals the true label");
  }
}

nlohmann::json AttackConfig::to_json() const {
  nlohmann::json j = {{"epsilon", epsilon},
                      {"max_iters", max_iters},
                      {"loss_threshold", loss_threshold},
                      {"mode", to_string(mode)},
                      {"prob_floor", prob_floor},
                      {"strict_u8", strict_u8},
                      {"iterate_empty_mask", iterate_empty_mask}};
  j["target_label_id"] = target_label_id ? nlohmann::json(*target_label_id) : nlohmann::json(nullptr);
  return j;
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) {
  AttackConfig c;
  try {
    c.epsilon = j.value("epsilon", c.epsilon);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.loss_threshold = j.value("loss_threshold", c.loss_threshold);
    c.mode = attack_mode_from_string(j.value("mode", std::string("untargeted")));
    if (j.contains("target_label_id") && !j["target_label_id"].is_null()) c.target_label_id = j["target_label_id"].get<int>();
    c.prob_floor = j.value("prob_floor", c.prob_floor);
    c.strict_u8 = j.value("strict_u8", c.strict_u8);
    c.iterate_empty_mask = j.value("iterate_empty_mask", c.iterate_empty_mask);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed attack config: ") + e.what());
  }
  return c;
}

RgbImage inverse_image(const RgbImage& image, const BinaryMask& mask) {
  require_same_shape(image, mask);
  RgbImage out = image;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = 0;
  }
  return out;
}

FloatImage inverse_image(const FloatImage& image, const BinaryMask& mask) {
  require_same_shape(image, mask);
  FloatImage out = image;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) out.data[3 * i] = out.data[3 * i + 1] = out.data[3 * i + 2] = 0.0f;
  }
  return out;
}

void mifgsm_step(const FloatImage& current, const FloatImage& x_inv, std::span<const float> cmask,
                 const FloatImage& grad, double epsilon, AttackMode mode, FloatImage& out) {
  const std::size_t n = current.data.size();
  if (!current.same_shape(x_inv) || !current.same_shape(grad) || x_inv.data.size() != n ||
      grad.data.size() != n || cmask.size() != n) {
    throw AlignmentError("attack step operands differ in shape");
  }
  if (!(epsilon > 0.0)) throw ParameterError("epsilon must be > 0");
  if (!out.same_shape(current) || out.data.size() != n) out = FloatImage(current.width, current.height);
  const float step = static_cast<float>(mode == AttackMode::untargeted ? epsilon : -epsilon);
  simd::active_kernels().masked_sign_step(current.data.data(), x_inv.data.data(), cmask.data(), grad.data.data(),
                                          step, out.data.data(), n);
}

FloatImage mifgsm_step(const FloatImage& current, const FloatImage& x_inv, const BinaryMask& mask,
                       const FloatImage& grad, double epsilon, AttackMode mode) {
  require_same_shape(current, mask);
  const auto plane = channel_mask(mask);
  FloatImage out(current.width, current.height);
  mifgsm_step(current, x_inv, plane, grad, epsilon, mode, out);
  return out;
}

namespace {

// Rounds to 8 bits and pulls every element back within +-floor(budget) of
// the original.
RgbImage quantize_within(const FloatImage& x, const RgbImage& original, double budget) {
  RgbImage q = quantize(x);
  const int cap = static_cast<int>(std::min(255.0, std::floor(budget)));
  for (std::size_t i = 0; i < q.pixels.size(); ++i) {
    const int o = original.pixels[i];
    const int v = std::clamp(static_cast<int>(q.pixels[i]), o - cap, o + cap);
    q.pixels[i] = static_cast<std::uint8_t>(v);
  }
  return q;
}

int argmax(const std::vector<double>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

AttackResult run_attack(const RgbImage& image, const BinaryMask& mask, VictimModel& model, int true_label_id,
                        const AttackConfig& config, const IterateObserver& observer) {
  require_same_shape(image, mask);
  config.validate(true_label_id, model.vocabulary().size());

  AttackResult result;
  const std::size_t masked = mask.count();
  result.empty_mask = masked == 0;
  if (result.empty_mask) {
    log::warn("attack called with an empty mask; output equals input");
    if (!config.iterate_empty_mask) {
      result.adversarial = image;
      return result;
    }
  }

  const FloatImage original(image);
  const FloatImage x_inv = inverse_image(original, mask);
  const std::vector<float> plane = channel_mask(mask);
  const bool targeted = config.mode == AttackMode::targeted;
  const int grad_label = targeted ? *config.target_label_id : true_label_id;

  FloatImage current = original;
  FloatImage next(image.width, image.height);
  for (int n = 0; n < config.max_iters; ++n) {
    LossGradient lg = model.loss_and_gradient(current, grad_label);

    IterationRecord rec;
    rec.iteration = n;
    rec.loss = lg.loss;
    rec.true_prob = lg.probs[static_cast<std::size_t>(true_label_id)];
    rec.top1_id = argmax(lg.probs);
    if (targeted) rec.target_prob = lg.probs[static_cast<std::size_t>(grad_label)];
    result.trace.push_back(rec);

    const bool stop = targeted ? *rec.target_prob > 1.0 - config.prob_floor
                               : rec.true_prob < config.prob_floor && rec.loss > config.loss_threshold;

    mifgsm_step(current, x_inv, plane, lg.grad, config.epsilon, config.mode, next);
    std::swap(current, next);
    ++result.iterations_run;
    if (config.strict_u8) {
      current = FloatImage(quantize_within(current, image, config.epsilon * result.iterations_run));
    }
    if (observer) observer(result.iterations_run, current);
    if (stop) {
      result.stopped_early = result.iterations_run < config.max_iters;
      break;
    }
  }

  result.adversarial = quantize_within(current, image, config.epsilon * result.iterations_run);

  std::size_t changed = 0;
  int linf = 0;
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    bool differs = false;
    for (int c = 0; c < 3; ++c) {
      const int d = std::abs(static_cast<int>(result.adversarial.pixels[3 * p + c]) - image.pixels[3 * p + c]);
      linf = std::max(linf, d);
      differs = differs || d != 0;
    }
    if (differs && mask.bits[p]) ++changed;
  }
  result.noise_linf = linf;
  result.noise_l0_fraction = masked ? static_cast<double>(changed) / static_cast<double>(masked) : 0.0;
  return result;
}

std::string adversarial_filename(const std::string& image_id) { return image_id + "_adv.png"; }
std::string trace_filename(const std::string& image_id) { return image_id + "_trace.json"; }

nlohmann::json trace_to_json(const AttackResult& r, const AttackConfig& config, int true_label_id) {
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& rec : r.trace) {
    nlohmann::json j = {{"n", rec.iteration}, {"loss", rec.loss}, {"true_prob", rec.true_prob}, {"top1_id", rec.top1_id}};
    if (rec.target_prob) j["target_prob"] = *rec.target_prob;
    iters.push_back(std::move(j));
  }
  return {{"config", config.to_json()},
          {"true_label_id", true_label_id},
          {"iterations_run", r.iterations_run},
          {"stopped_early", r.stopped_early},
          {"empty_mask", r.empty_mask},
          {"noise", {{"linf", r.noise_linf}, {"l0_fraction", r.noise_l0_fraction}}},
          {"iterations", iters}};
}

}  // namespace mifgsm
