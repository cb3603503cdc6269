#include <httplib.h>

#include <cmath>

#include "mifgsm/errors.hpp"
#include "mifgsm/victim.hpp"

namespace mifgsm {

HttpVictim::HttpVictim(std::string endpoint, ClassVocabulary vocab, nlohmann::json options, double timeout_seconds)
    : endpoint_(std::move(endpoint)), vocab_(std::move(vocab)), options_(std::move(options)), timeout_(timeout_seconds) {
  vocab_.validate();
  if (endpoint_.empty()) throw ConfigError("http victim needs an endpoint");

  httplib::Client client(endpoint_);
  client.set_read_timeout(static_cast<time_t>(timeout_), 0);
  auto res = client.Get("/v1/info");
  if (!res) throw EnvironmentError("victim backend unreachable at " + endpoint_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200) throw EnvironmentError("victim backend /v1/info returned HTTP " + std::to_string(res->status));

  nlohmann::json info;
  try {
    info = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw EnvironmentError(std::string("victim backend sent malformed info: ") + e.what());
  }
  if (!info.value("differentiable", false)) {
    throw CapabilityError("victim backend at " + endpoint_ + " does not provide input gradients");
  }
  if (info.contains("labels") && info["labels"].get<std::vector<std::string>>() != vocab_.labels) {
    throw ConfigError("victim backend labels differ from the configured vocabulary");
  }
  side_ = info.value("input_side", 224);
  model_name_ = info.value("model", std::string("unknown"));
}

void HttpVictim::check_input(const FloatImage& image) const {
  if (image.width != side_ || image.height != side_) {
    throw ContractError("victim expects " + std::to_string(side_) + "x" + std::to_string(side_) + " input, got " +
                        std::to_string(image.width) + "x" + std::to_string(image.height));
  }
}

nlohmann::json HttpVictim::post(const std::string& route, const nlohmann::json& body) {
  httplib::Client client(endpoint_);
  const auto secs = static_cast<time_t>(timeout_);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  auto res = client.Post(route, body.dump(), "application/json");
  if (!res) throw EnvironmentError("victim backend unreachable at " + endpoint_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw ContractError("victim backend " + route + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("victim backend sent malformed JSON: ") + e.what());
  }
}

namespace {

std::vector<double> checked_probs(const nlohmann::json& j, int classes) {
  auto probs = j.at("probs").get<std::vector<double>>();
  if (static_cast<int>(probs.size()) != classes) {
    throw ContractError("victim returned " + std::to_string(probs.size()) + " probabilities for " +
                        std::to_string(classes) + " classes");
  }
  double total = 0.0;
  for (double p : probs) total += p;
  if (std::abs(total - 1.0) > 1e-5) throw ContractError("victim probabilities sum to " + std::to_string(total));
  return probs;
}

}  // namespace

std::vector<double> HttpVictim::predict(const FloatImage& image) {
  check_input(image);
  const nlohmann::json body = {{"width", image.width}, {"height", image.height}, {"pixels", image.data}};
  try {
    return checked_probs(post("/v1/predict", body), vocab_.size());
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("victim predict response: ") + e.what());
  }
}

LossGradient HttpVictim::loss_and_gradient(const FloatImage& image, int label_id) {
  check_input(image);
  if (label_id < 0 || label_id >= vocab_.size()) throw ParameterError("label id out of range");
  const nlohmann::json body = {
      {"width", image.width}, {"height", image.height}, {"pixels", image.data}, {"label_id", label_id}};
  try {
    const auto j = post("/v1/loss_grad", body);
    LossGradient out;
    out.probs = checked_probs(j, vocab_.size());
    out.loss = j.at("loss").get<double>();
    out.grad = FloatImage(image.width, image.height);
    out.grad.data = j.at("grad").get<std::vector<float>>();
    if (out.grad.data.size() != image.data.size()) throw ContractError("victim gradient shape differs from input");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("victim loss_grad response: ") + e.what());
  }
}

nlohmann::json HttpVictim::describe() const {
  return {{"kind", "http"}, {"endpoint", endpoint_}, {"model", model_name_}, {"input_side", side_}, {"options", options_}};
}

}  // namespace mifgsm
