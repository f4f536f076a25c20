#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace textar {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Level comes from TEXTAR_LOG={error,info,debug}; default info.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("TEXTAR_LOG");
    if (!env) return LogLevel::Info;
    if (std::strcmp(env, "error") == 0) return LogLevel::Error;
    if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

template <typename... Args>
void log_at(LogLevel lvl, const char* fmt, Args... args) {
  if (lvl > log_level()) return;
  const char* tag = lvl == LogLevel::Error ? "E" : (lvl == LogLevel::Info ? "I" : "D");
  std::fprintf(stderr, "[%s] ", tag);
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

inline void log_at(LogLevel lvl, const char* msg) { log_at(lvl, "%s", msg); }

#define TEXTAR_LOG_INFO(...) ::textar::log_at(::textar::LogLevel::Info, __VA_ARGS__)
#define TEXTAR_LOG_DEBUG(...) ::textar::log_at(::textar::LogLevel::Debug, __VA_ARGS__)
#define TEXTAR_LOG_ERROR(...) ::textar::log_at(::textar::LogLevel::Error, __VA_ARGS__)

}  // namespace textar
