#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mifgsm/image.hpp"
#include "mifgsm/victim.hpp"

namespace mifgsm {

enum class AttackMode { untargeted, targeted };

std::string to_string(AttackMode m);
AttackMode attack_mode_from_string(const std::string& s);

struct AttackConfig {
  double epsilon = 1.0;          // pixel units per iteration
  int max_iters = 100;
  double loss_threshold = 20.0;  // early-stop loss level
  AttackMode mode = AttackMode::untargeted;
  std::optional<int> target_label_id;
  double prob_floor = 1e-6;      // stands in for "probability reached zero"
  // Re-quantize every iterate to 8 bits instead of only the output.
  bool strict_u8 = false;
  // With an empty mask, still spend max_iters model calls (each a no-op)
  // instead of returning immediately.
  bool iterate_empty_mask = false;

  // Throws ParameterError on epsilon <= 0, max_iters < 1, or a targeted
  // config whose target is missing, out of range, or equal to the true label.
  void validate(int true_label_id, int class_count) const;

  nlohmann::json to_json() const;
  static AttackConfig from_json(const nlohmann::json& j);
};

struct IterationRecord {
  int iteration = 0;  // n, evaluated at X_n
  double loss = 0.0;  // loss of the label driving the gradient
  double true_prob = 0.0;
  int top1_id = 0;
  std::optional<double> target_prob;
};

struct AttackResult {
  RgbImage adversarial;
  int iterations_run = 0;
  bool stopped_early = false;
  bool empty_mask = false;
  std::vector<IterationRecord> trace;
  double noise_linf = 0.0;
  double noise_l0_fraction = 0.0;  // changed masked pixels / masked pixels
};

// X * (1 - M), mask broadcast over channels.
RgbImage inverse_image(const RgbImage& image, const BinaryMask& mask);
FloatImage inverse_image(const FloatImage& image, const BinaryMask& mask);

// One masked sign step:
//   untargeted: Clip_[0,255]( x_inv + M * (current + eps * sign(grad)) )
//   targeted:   Clip_[0,255]( x_inv + M * (current - eps * sign(grad)) )
// grad is the gradient of the loss of the true label (untargeted) or of the
// target label (targeted). The result stays continuous; see quantize().
FloatImage mifgsm_step(const FloatImage& current, const FloatImage& x_inv, const BinaryMask& mask,
                       const FloatImage& grad, double epsilon, AttackMode mode);

// Same step on pre-expanded per-element mask data, writing into out.
void mifgsm_step(const FloatImage& current, const FloatImage& x_inv, std::span<const float> channel_mask,
                 const FloatImage& grad, double epsilon, AttackMode mode, FloatImage& out);

// Called after every update with the iteration count and the new iterate.
using IterateObserver = std::function<void(int iteration, const FloatImage& iterate)>;

// Masked iterative FGSM. Starts from X_0 = image; at step n evaluates the
// loss and gradient at X_n, updates to X_{n+1} and stops once the stop rule
// held at X_n. The output is rounded to 8 bits with |adv - image| capped at
// floor(epsilon * iterations_run); outside the mask it equals image exactly.
AttackResult run_attack(const RgbImage& image, const BinaryMask& mask, VictimModel& model, int true_label_id,
                        const AttackConfig& config, const IterateObserver& observer = {});

std::string adversarial_filename(const std::string& image_id);  // <id>_adv.png
std::string trace_filename(const std::string& image_id);        // <id>_trace.json

nlohmann::json trace_to_json(const AttackResult& result, const AttackConfig& config, int true_label_id);

}  // namespace mifgsm
