#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace magr::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Quiet = 3 };

Level& threshold();

template <typename... Args>
void write(Level level, std::string_view tag, const Args&... args) {
  if (level < threshold()) return;
  std::ostringstream os;
  os << "[" << tag << "] ";
  (os << ... << args);
  os << '\n';
  std::cerr << os.str();
}

template <typename... Args>
void info(const Args&... args) { write(Level::Info, "info", args...); }
template <typename... Args>
void warn(const Args&... args) { write(Level::Warn, "warn", args...); }
template <typename... Args>
void debug(const Args&... args) { write(Level::Debug, "debug", args...); }

}  // namespace magr::log
