#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace gamver::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

// Level comes from GAMVER_LOG (error|warn|info|debug); default warn.
inline Level threshold() {
  static const Level lvl = [] {
    const char* env = std::getenv("GAMVER_LOG");
    if (env == nullptr) return Level::warn;
    const std::string s(env);
    if (s == "error") return Level::error;
    if (s == "warn") return Level::warn;
    if (s == "info") return Level::info;
    if (s == "debug") return Level::debug;
    return Level::warn;
  }();
  return lvl;
}

inline void emit(Level lvl, const std::string& msg) {
  if (lvl > threshold()) return;
  static std::mutex mu;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[gamver:" << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

template <typename... Args>
void error(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  emit(Level::error, oss.str());
}

template <typename... Args>
void warn(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  emit(Level::warn, oss.str());
}

template <typename... Args>
void info(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  emit(Level::info, oss.str());
}

template <typename... Args>
void debug(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  emit(Level::debug, oss.str());
}

}  // namespace gamver::log
