#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace speckle::log {

enum class Level { Info, Warn, Error };

using Sink = std::function<void(Level, std::string_view)>;

/// Replaces the process-wide sink (stderr by default); returns the previous one.
Sink set_sink(Sink sink);

void write(Level level, std::string_view message);
inline void info(std::string_view m) { write(Level::Info, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void error(std::string_view m) { write(Level::Error, m); }

} // namespace speckle::log
