#pragma once

#include <functional>
#include <string>

namespace sfv {

enum class LogLevel { info = 0, warning = 1 };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Default sink writes warnings to stderr and drops info messages unless
// SFMSFV_VERBOSE is set. Returns the previous sink.
LogSink set_log_sink(LogSink sink);
void log_message(LogLevel level, const std::string& message);

inline void log_info(const std::string& m) { log_message(LogLevel::info, m); }
inline void log_warning(const std::string& m) { log_message(LogLevel::warning, m); }

}  // namespace sfv
