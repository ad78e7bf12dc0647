#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <string>

namespace abr {

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// All stochastic behaviour in the library is driven by explicit seeds.  Seed
// derivation uses SplitMix64 so that independent streams (per trace, per
// actor, per episode) can be spawned from one master seed without any stream
// depending on how much randomness another stream consumed.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Mixes a master seed with stream tags into an independent sub-seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ (tag * 0x9e3779b97f4a7c15ULL)) + index);
}

using Rng = std::mt19937_64;

// Uniform double in [0, 1).  Hand-rolled from raw engine output so results
// do not depend on the standard library's distribution implementation.
inline double uniform01(Rng& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double uniform_range(Rng& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Uniform integer in [0, n) via Lemire's multiply-shift reduction.
inline std::uint64_t uniform_index(Rng& g, std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(g()) * n) >> 64);
}

// ---------------------------------------------------------------------------
// Logging.  Data goes to files; diagnostics go to stderr.  Verbosity is
// controlled by the ABR_VTRACE_LOG environment variable (error|info|debug).
// ---------------------------------------------------------------------------

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("ABR_VTRACE_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    if (std::strcmp(env, "error") == 0) return LogLevel::kError;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

inline void log_at(LogLevel level, const char* fmt, ...) {
  if (level > log_level()) return;
  const char* prefix = level == LogLevel::kError   ? "error"
                       : level == LogLevel::kInfo ? "info"
                                                  : "debug";
  std::fprintf(stderr, "[%s] ", prefix);
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fprintf(stderr, "\n");
}

#define ABR_LOG_ERROR(...) ::abr::log_at(::abr::LogLevel::kError, __VA_ARGS__)
#define ABR_LOG_INFO(...) ::abr::log_at(::abr::LogLevel::kInfo, __VA_ARGS__)
#define ABR_LOG_DEBUG(...) ::abr::log_at(::abr::LogLevel::kDebug, __VA_ARGS__)

// Formats a double with enough digits to round-trip exactly.
inline std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace abr
