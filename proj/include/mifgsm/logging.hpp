#pragma once

#include <functional>
#include <string_view>

namespace mifgsm::log {

enum class Level { info, warn, error };

using Sink = std::function<void(Level, std::string_view)>;

// Replaces the process-wide sink; returns the previous one. The default sink
// writes to stderr.
Sink set_sink(Sink sink);

void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

}  // namespace mifgsm::log
