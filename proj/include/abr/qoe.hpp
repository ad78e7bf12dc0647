#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "abr/env.hpp"

namespace abr {

enum class QoEVariant { kLinear, kLog, kHd };

inline const char* to_string(QoEVariant v) {
  switch (v) {
    case QoEVariant::kLinear: return "linear";
    case QoEVariant::kLog: return "log";
    case QoEVariant::kHd: return "hd";
  }
  return "?";
}

// Per-chunk quality model plus the rebuffer penalty rate.
//   linear: q(b) = b in Mbps, penalty 4.3/s
//   log:    q(b) = ln(b / b_min), penalty 2.66/s
//   hd:     q(b) = table lookup rewarding HD levels, penalty 8/s
struct QoEConfig {
  QoEVariant variant = QoEVariant::kLinear;
  double rebuffer_penalty = 4.3;
  std::vector<double> bitrate_levels_kbps = {300, 750, 1200, 1850, 2850, 4300};
  std::vector<double> hd_quality_table = {1, 2, 3, 12, 15, 20};
  double b_min_kbps = 300;
};

inline double default_rebuffer_penalty(QoEVariant v) {
  switch (v) {
    case QoEVariant::kLinear: return 4.3;
    case QoEVariant::kLog: return 2.66;
    case QoEVariant::kHd: return 8.0;
  }
  return 4.3;
}

inline QoEConfig make_qoe_config(QoEVariant v, const VideoSpec& video) {
  QoEConfig cfg;
  cfg.variant = v;
  cfg.rebuffer_penalty = default_rebuffer_penalty(v);
  cfg.bitrate_levels_kbps = video.bitrate_levels_kbps;
  cfg.b_min_kbps = video.bitrate_levels_kbps.front();
  return cfg;
}

inline void validate_qoe(const QoEConfig& cfg) {
  if (cfg.bitrate_levels_kbps.empty()) {
    throw std::invalid_argument("QoE config has no bitrate ladder");
  }
  if (cfg.variant == QoEVariant::kHd) {
    if (cfg.hd_quality_table.size() != cfg.bitrate_levels_kbps.size()) {
      throw std::invalid_argument("hd quality table size mismatch");
    }
    for (std::size_t i = 1; i < cfg.hd_quality_table.size(); ++i) {
      if (!(cfg.hd_quality_table[i] > cfg.hd_quality_table[i - 1])) {
        throw std::invalid_argument("hd quality table must be increasing");
      }
    }
  }
  if (cfg.variant == QoEVariant::kLog && !(cfg.b_min_kbps > 0.0)) {
    throw std::invalid_argument("log QoE needs b_min > 0");
  }
  if (!(cfg.rebuffer_penalty >= 0.0)) {
    throw std::invalid_argument("rebuffer penalty must be >= 0");
  }
}

inline double quality(std::size_t level, const QoEConfig& cfg) {
  if (level >= cfg.bitrate_levels_kbps.size()) {
    throw std::out_of_range("quality(): level out of range");
  }
  switch (cfg.variant) {
    case QoEVariant::kLinear:
      return cfg.bitrate_levels_kbps[level] / 1000.0;  // Mbps
    case QoEVariant::kLog:
      return std::log(cfg.bitrate_levels_kbps[level] / cfg.b_min_kbps);
    case QoEVariant::kHd:
      return cfg.hd_quality_table[level];
  }
  return 0.0;
}

// One summand of the episode QoE: quality minus rebuffer penalty minus the
// switching penalty against the previous chunk.  Pass nullopt for the first
// chunk, which carries no switching term.
inline double step_reward(std::optional<std::size_t> prev_level,
                          std::size_t level, double rebuffer_s,
                          const QoEConfig& cfg) {
  if (rebuffer_s < 0.0) {
    throw std::invalid_argument("negative rebuffer time");
  }
  double r = quality(level, cfg) - cfg.rebuffer_penalty * rebuffer_s;
  if (prev_level.has_value()) {
    r -= std::abs(quality(level, cfg) - quality(*prev_level, cfg));
  }
  return r;
}

struct QoEBreakdown {
  double total = 0.0;
  double quality_sum = 0.0;
  double rebuffer_penalty_sum = 0.0;
  double smoothness_penalty_sum = 0.0;
};

inline QoEBreakdown episode_qoe(std::span<const StepOutcome> outcomes,
                                const QoEConfig& cfg) {
  if (outcomes.empty()) {
    throw std::invalid_argument("episode_qoe(): empty outcome list");
  }
  QoEBreakdown b;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    b.quality_sum += quality(outcomes[i].level, cfg);
    b.rebuffer_penalty_sum += cfg.rebuffer_penalty * outcomes[i].rebuffer_time_s;
    if (i > 0) {
      b.smoothness_penalty_sum += std::abs(quality(outcomes[i].level, cfg) -
                                           quality(outcomes[i - 1].level, cfg));
    }
  }
  b.total = b.quality_sum - b.rebuffer_penalty_sum - b.smoothness_penalty_sum;
  return b;
}

}  // namespace abr
