#include "mifgsm/logging.hpp"

#include <iostream>
#include <mutex>

namespace mifgsm::log {
namespace {

std::mutex g_mutex;

void stderr_sink(Level level, std::string_view msg) {
  static constexpr const char* kTags[] = {"info", "warn", "error"};
  std::cerr << "[" << kTags[static_cast<int>(level)] << "] " << msg << '\n';
}

Sink& sink() {
  static Sink s = stderr_sink;
  return s;
}

void emit(Level level, std::string_view msg) {
  std::lock_guard lock(g_mutex);
  if (sink()) sink()(level, msg);
}

}  // namespace

Sink set_sink(Sink next) {
  std::lock_guard lock(g_mutex);
  Sink prev = std::move(sink());
  sink() = std::move(next);
  return prev;
}

void info(std::string_view msg) { emit(Level::info, msg); }
void warn(std::string_view msg) { emit(Level::warn, msg); }
void error(std::string_view msg) { emit(Level::error, msg); }

}  // namespace mifgsm::log
