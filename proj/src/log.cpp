#include "stepalign/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <string>

namespace stepalign::log {

namespace {

Level initial_level() {
  if (const char* env = std::getenv("STEPALIGN_LOG")) {
    const std::string v(env);
    if (v == "quiet") return Level::quiet;
    if (v == "info") return Level::info;
  }
  return Level::warn;
}

std::atomic<Level>& current() {
  static std::atomic<Level> lvl{initial_level()};
  return lvl;
}

}  // namespace

void set_level(Level l) { current().store(l); }
Level level() { return current().load(); }

void warn(std::string_view message) {
  if (level() >= Level::warn) std::cerr << "[stepalign] warning: " << message << '\n';
}

void info(std::string_view message) {
  if (level() >= Level::info) std::cerr << "[stepalign] " << message << '\n';
}

}  // namespace stepalign::log
