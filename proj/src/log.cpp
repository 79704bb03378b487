#include "sfmsfv/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace sfv {
namespace {

std::mutex g_mutex;

void default_sink(LogLevel level, const std::string& message) {
  static const bool verbose = std::getenv("SFMSFV_VERBOSE") != nullptr;
  if (level == LogLevel::info && !verbose) return;
  std::cerr << (level == LogLevel::warning ? "warning: " : "info: ") << message << '\n';
}

LogSink& sink_ref() {
  static LogSink sink = default_sink;
  return sink;
}

}  // namespace

LogSink set_log_sink(LogSink sink) {
  std::lock_guard<std::mutex> lock(g_mutex);
  LogSink old = sink_ref();
  sink_ref() = sink ? std::move(sink) : LogSink(default_sink);
  return old;
}

void log_message(LogLevel level, const std::string& message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  sink_ref()(level, message);
}

}  // namespace sfv
