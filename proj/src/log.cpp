#include "speckle/log.hpp"

#include <iostream>
#include <mutex>

namespace speckle::log {
namespace {

std::mutex g_mutex;

void stderr_sink(Level level, std::string_view message) {
  switch (level) {
  case Level::Info: std::cerr << "[info] "; break;
  case Level::Warn: std::cerr << "[warn] "; break;
  case Level::Error: std::cerr << "[error] "; break;
  }
  std::cerr << message << '\n';
}

Sink &current() {
  static Sink sink = stderr_sink;
  return sink;
}

} // namespace

Sink set_sink(Sink sink) {
  std::lock_guard lock(g_mutex);
  Sink previous = std::move(current());
  current() = sink ? std::move(sink) : Sink(stderr_sink);
  return previous;
}

void write(Level level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  current()(level, message);
}

} // namespace speckle::log
