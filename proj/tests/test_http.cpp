#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mifgsm/attack.hpp"
#include "mifgsm/errors.hpp"
#include "mifgsm/segmentation.hpp"
#include "mifgsm/victim.hpp"
#include "support.hpp"

using namespace mifgsm;
using nlohmann::json;
using testsupport::vocab_of;

namespace {

// Serves a ReferenceClassifier and a threshold segmenter over the documented
// HTTP contracts on an ephemeral port.
class FakeBackend {
 public:
  explicit FakeBackend(bool differentiable = true)
      : model_(ReferenceClassifier::random(vocab_of({"apple", "cake", "couch"}), 5, 0.3, 64, 8)) {
    server_.Get("/v1/info", [this, differentiable](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"model", "fake-ref"},
                           {"labels", model_.vocabulary().labels},
                           {"input_side", 64},
                           {"differentiable", differentiable}}
                          .dump(),
                      "application/json");
    });
    server_.Post("/v1/predict", [this](const httplib::Request& req, httplib::Response& res) {
      const auto img = image_of(json::parse(req.body));
      res.set_content(json{{"probs", model_.predict(img)}}.dump(), "application/json");
    });
    server_.Post("/v1/loss_grad", [this](const httplib::Request& req, httplib::Response& res) {
      const auto j = json::parse(req.body);
      const auto lg = model_.loss_and_gradient(image_of(j), j.at("label_id").get<int>());
      res.set_content(json{{"loss", lg.loss}, {"probs", lg.probs}, {"grad", lg.grad.data}}.dump(), "application/json");
    });
    server_.Post("/v1/segment", [](const httplib::Request& req, httplib::Response& res) {
      const auto j = json::parse(req.body);
      const auto px = j.at("pixels").get<std::vector<int>>();
      std::vector<float> mask;
      for (std::size_t i = 0; i < px.size(); i += 3) mask.push_back(px[i] > 128 ? 1.0f : 0.0f);
      res.set_content(json{{"provider", "fake-seg"}, {"proposals", {{{"quality", 0.9}, {"mask", mask}}}}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeBackend() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  ReferenceClassifier& model() { return model_; }

 private:
  static FloatImage image_of(const json& j) {
    FloatImage img(j.at("width").get<int>(), j.at("height").get<int>());
    img.data = j.at("pixels").get<std::vector<float>>();
    return img;
  }

  ReferenceClassifier model_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_SUITE("http") {
  TEST_CASE("remote victim matches the local model") {
    FakeBackend backend;
    HttpVictim victim(backend.endpoint(), vocab_of({"apple", "cake", "couch"}));
    CHECK(victim.input_side() == 64);
    CHECK(victim.describe()["model"] == "fake-ref");
    std::mt19937 rng(1);
    const FloatImage img(testsupport::random_image(64, 64, rng));
    const auto remote = victim.loss_and_gradient(img, 2);
    const auto local = backend.model().loss_and_gradient(img, 2);
    CHECK(remote.grad == local.grad);
    CHECK(remote.loss == doctest::Approx(local.loss).epsilon(1e-12));
    CHECK(victim.predict(img).size() == 3);
    CHECK_THROWS_AS(victim.predict(FloatImage(32, 32)), ContractError);

    // The attack runs unchanged against the remote model.
    AttackConfig c;
    c.max_iters = 5;
    const auto rgb = testsupport::random_image(64, 64, rng);
    const auto a = run_attack(rgb, BinaryMask::full(64, 64), victim, 0, c);
    const auto b = run_attack(rgb, BinaryMask::full(64, 64), backend.model(), 0, c);
    CHECK(a.adversarial == b.adversarial);
  }

  TEST_CASE("capability and vocabulary checks") {
    {
      FakeBackend backend(false);
      CHECK_THROWS_AS(HttpVictim(backend.endpoint(), vocab_of({"apple", "cake", "couch"})), CapabilityError);
    }
    FakeBackend backend;
    CHECK_THROWS_AS(HttpVictim(backend.endpoint(), vocab_of({"apple", "cake"})), ConfigError);
    CHECK_THROWS_AS(HttpVictim("http://127.0.0.1:1", vocab_of({"a"}), json::object(), 2.0), EnvironmentError);
  }

  TEST_CASE("remote segmentation provider") {
    FakeBackend backend;
    HttpProvider provider(backend.endpoint());
    ImageRecord rec;
    rec.id = "f";
    rec.pixels = RgbImage(4, 2, 0);
    rec.pixels.at(1, 0, 0) = 200;
    rec.pixels.at(3, 1, 0) = 255;
    const auto m = acquire_mask(rec, provider);
    CHECK(m.mask.bits == std::vector<std::uint8_t>{0, 1, 0, 0, 0, 0, 0, 1});
    CHECK(provider.name() == "fake-seg@" + backend.endpoint());

    HttpProvider down("http://127.0.0.1:1", 2.0);
    CHECK_THROWS_AS(acquire_mask(rec, down), ProviderError);
  }
}
