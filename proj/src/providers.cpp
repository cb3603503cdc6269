#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <fstream>

#include <unistd.h>

#include "mifgsm/errors.hpp"
#include "mifgsm/segmentation.hpp"

namespace fs = std::filesystem;

namespace mifgsm {

StubProvider::StubProvider(std::vector<MaskProposal> proposals, std::string name)
    : callback_([p = std::move(proposals)](const RgbImage&) { return p; }), name_(std::move(name)) {}

StubProvider::StubProvider(Callback callback, std::string name)
    : callback_(std::move(callback)), name_(std::move(name)) {}

std::vector<MaskProposal> StubProvider::propose(const RgbImage& image) {
  ++calls_;
  return callback_(image);
}

std::vector<MaskProposal> FullFrameProvider::propose(const RgbImage& image) {
  MaskProposal p;
  p.width = image.width;
  p.height = image.height;
  p.soft.assign(static_cast<std::size_t>(image.width) * image.height, 1.0f);
  p.quality = 1.0;
  p.bbox = BBox{0, 0, image.width - 1, image.height - 1};
  return {std::move(p)};
}

std::vector<MaskProposal> parse_proposals_json(const nlohmann::json& j, int width, int height,
                                               const fs::path& base_dir) {
  std::vector<MaskProposal> out;
  try {
    for (const auto& item : j.at("proposals")) {
      MaskProposal p;
      p.width = width;
      p.height = height;
      p.quality = item.at("quality").get<double>();
      if (item.contains("bbox") && !item["bbox"].is_null()) {
        const auto b = item["bbox"].get<std::vector<int>>();
        if (b.size() != 4) throw ContractError("bbox must have 4 entries");
        p.bbox = BBox{b[0], b[1], b[2], b[3]};
      }
      if (item.contains("mask")) {
        p.soft = item["mask"].get<std::vector<float>>();
      } else if (item.contains("mask_path")) {
        const io::GrayImage g = io::read_gray(base_dir / item["mask_path"].get<std::string>());
        p.width = g.width;
        p.height = g.height;
        p.soft.resize(g.pixels.size());
        for (std::size_t i = 0; i < g.pixels.size(); ++i) p.soft[i] = static_cast<float>(g.pixels[i]) / 255.0f;
      } else {
        throw ContractError("proposal carries neither 'mask' nor 'mask_path'");
      }
      if (p.soft.size() != static_cast<std::size_t>(p.width) * p.height) {
        throw AlignmentError("proposal mask has " + std::to_string(p.soft.size()) + " values, expected " +
                             std::to_string(static_cast<std::size_t>(p.width) * p.height));
      }
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed proposal list: ") + e.what());
  }
  return out;
}

ProcessProvider::ProcessProvider(std::string command, fs::path scratch_dir)
    : command_(std::move(command)), scratch_(std::move(scratch_dir)) {
  if (command_.empty()) throw ConfigError("process mask provider needs a command");
  if (scratch_.empty()) {
    scratch_ = fs::temp_directory_path() / ("mifgsm-seg-" + std::to_string(::getpid()) + "-" +
                                            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
  }
}

namespace {
std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}
}  // namespace

std::vector<MaskProposal> ProcessProvider::propose(const RgbImage& image) {
  const fs::path work = scratch_ / std::to_string(counter_++);
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path input = work / "input.png";
  io::write_png(input, image);

  const std::string cmd = command_ + " " + shell_quote(input.string()) + " " + shell_quote(work.string());
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    fs::remove_all(work);
    throw ProviderError("mask provider command failed (status " + std::to_string(rc) + "): " + command_);
  }
  std::ifstream in(work / "proposals.json");
  if (!in) {
    fs::remove_all(work);
    throw ProviderError("mask provider wrote no proposals.json: " + command_);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fs::remove_all(work);
    throw ProviderError(std::string("mask provider wrote malformed JSON: ") + e.what());
  }
  auto proposals = parse_proposals_json(j, image.width, image.height, work);
  fs::remove_all(work);
  return proposals;
}

HttpProvider::HttpProvider(std::string endpoint, double timeout_seconds)
    : endpoint_(std::move(endpoint)), timeout_(timeout_seconds) {
  if (endpoint_.empty()) throw ConfigError("http mask provider needs an endpoint");
}

std::string HttpProvider::name() const {
  return remote_name_.empty() ? "http:" + endpoint_ : remote_name_ + "@" + endpoint_;
}

std::vector<MaskProposal> HttpProvider::propose(const RgbImage& image) {
  httplib::Client client(endpoint_);
  const auto secs = static_cast<time_t>(timeout_);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  const nlohmann::json body = {{"width", image.width}, {"height", image.height}, {"pixels", image.pixels}};
  auto res = client.Post("/v1/segment", body.dump(), "application/json");
  if (!res) throw ProviderError("mask provider unreachable at " + endpoint_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw ProviderError("mask provider returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("mask provider sent malformed JSON: ") + e.what());
  }
  if (j.contains("provider")) remote_name_ = j["provider"].get<std::string>();
  return parse_proposals_json(j, image.width, image.height);
}

}  // namespace mifgsm
