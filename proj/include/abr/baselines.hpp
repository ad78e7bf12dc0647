#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "abr/env.hpp"
#include "abr/qoe.hpp"

namespace abr {

struct BaselineConfig {
  double bb_reservoir_s = 5.0;
  double bb_cushion_s = 10.0;
  std::size_t rb_window = 5;
  // <= 0 derives BOLA's constants from the boundary conditions below.
  double bola_utility_weight = 0.0;
  double bola_startup = 0.0;
  std::size_t mpc_horizon = 5;
  std::size_t mpc_error_window = 5;
};

// Buffer-based selection: lowest level inside the reservoir, highest above
// reservoir + cushion, linear ladder interpolation in between.
inline std::size_t bb_select(const StreamState& state,
                             const BaselineConfig& cfg) {
  const std::size_t levels = state.levels();
  if (state.buffer_s <= cfg.bb_reservoir_s) return 0;
  if (state.buffer_s >= cfg.bb_reservoir_s + cfg.bb_cushion_s) {
    return levels - 1;
  }
  const double fraction = (state.buffer_s - cfg.bb_reservoir_s) / cfg.bb_cushion_s;
  auto idx = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(levels - 1)));
  return std::min(idx, levels - 1);
}

// Harmonic mean of up to `window` most recent nonzero samples; 0 when the
// history is empty or all zero.
inline double harmonic_mean_recent(std::span<const double> history,
                                   std::size_t window) {
  double inv_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < history.size() && count < window; ++i) {
    if (history[i] > 0.0) {
      inv_sum += 1.0 / history[i];
      ++count;
    }
  }
  if (count == 0) return 0.0;
  return static_cast<double>(count) / inv_sum;
}

// Rate-based selection: the highest level whose bitrate fits under the
// harmonic-mean throughput prediction.
inline std::size_t rb_select(const StreamState& state,
                             const BaselineConfig& cfg,
                             const VideoSpec& video) {
  const double predicted_mbps =
      harmonic_mean_recent(state.throughput_mbps, cfg.rb_window);
  std::size_t chosen = 0;
  for (std::size_t l = 0; l < video.levels(); ++l) {
    if (video.bitrate_levels_kbps[l] <= predicted_mbps * 1000.0) chosen = l;
  }
  return chosen;
}

struct BolaParams {
  double utility_weight = 0.0;  // V_B
  double startup = 0.0;         // g_p
};

// Derives (V_B, g_p) from two boundary conditions on nominal chunk sizes:
// an empty buffer must select level 0 and a full buffer must select the top
// level.  g_p is the smallest startup utility making level 0 win at zero
// buffer; V_B then makes the top level win at capacity.  Both get a hair of
// slack so the boundary argmax is strict under ties-break-low.
inline BolaParams derive_bola_params(const VideoSpec& video) {
  const std::size_t levels = video.levels();
  std::vector<double> size_mb(levels), utility(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    size_mb[l] = video.nominal_chunk_size_mb(l);
    utility[l] = std::log(size_mb[l] / size_mb[0]);
  }
  BolaParams params;
  for (std::size_t m = 1; m < levels; ++m) {
    params.startup = std::max(
        params.startup, utility[m] * size_mb[0] / (size_mb[m] - size_mb[0]));
  }
  params.startup *= 1.0 + 1e-9;

  // Top-level optimality at capacity caps the weight from above, so the
  // slack must shrink it.
  const double max_buffer_chunks = video.buffer_capacity_s / video.chunk_duration_s;
  const std::size_t top = levels - 1;
  double weight = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < top; ++m) {
    const double numer = max_buffer_chunks * (size_mb[top] - size_mb[m]);
    const double denom = (utility[m] + params.startup) * size_mb[top] -
                         (utility[top] + params.startup) * size_mb[m];
    weight = std::min(weight, numer / denom);
  }
  params.utility_weight = weight * (1.0 - 1e-9);
  return params;
}

// Buffer-only Lyapunov selection over nominal chunk sizes: argmax over
// levels of (V_B (u_m + g_p) - buffer_in_chunks) / size_m, ties to the
// lower level.
inline std::size_t bola_select(const StreamState& state,
                               const BaselineConfig& cfg,
                               const VideoSpec& video) {
  BolaParams params;
  if (cfg.bola_utility_weight > 0.0 && cfg.bola_startup > 0.0) {
    params.utility_weight = cfg.bola_utility_weight;
    params.startup = cfg.bola_startup;
  } else {
    params = derive_bola_params(video);
  }
  const double buffer_chunks = state.buffer_s / video.chunk_duration_s;
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < video.levels(); ++m) {
    const double size_mb = video.nominal_chunk_size_mb(m);
    const double util = std::log(size_mb / video.nominal_chunk_size_mb(0));
    const double score =
        (params.utility_weight * (util + params.startup) - buffer_chunks) /
        size_mb;
    if (score > best_score) {
      best_score = score;
      best = m;
    }
  }
  return best;
}

// Robust throughput estimate: harmonic-mean prediction discounted by the
// worst relative prediction error seen over the recent window.
inline double mpc_throughput_estimate(const StreamState& state,
                                      const BaselineConfig& cfg,
                                      std::span<const double> error_history) {
  const double hm = harmonic_mean_recent(state.throughput_mbps, cfg.rb_window);
  double max_err = 0.0;
  const std::size_t n = error_history.size();
  const std::size_t from = n > cfg.mpc_error_window ? n - cfg.mpc_error_window : 0;
  for (std::size_t i = from; i < n; ++i) {
    max_err = std::max(max_err, error_history[i]);
  }
  return hm / (1.0 + max_err);
}

// Exhaustive model-predictive search: simulates buffer evolution for every
// level sequence over the horizon under the robust throughput estimate and
// returns the first level of the best-QoE sequence.  Sequences are visited
// in lexicographic order, so ties resolve to the lower level.
inline std::size_t mpc_select(const StreamState& state,
                              const BaselineConfig& cfg,
                              const VideoSpec& video, const QoEConfig& qoe_cfg,
                              std::span<const double> error_history) {
  const std::size_t levels = video.levels();
  const std::size_t remaining = video.num_chunks > state.chunk_index
                                    ? video.num_chunks - state.chunk_index
                                    : 0;
  if (remaining == 0) return 0;
  const std::size_t horizon = std::min<std::size_t>(cfg.mpc_horizon, remaining);

  const double estimate = mpc_throughput_estimate(state, cfg, error_history);
  if (!(estimate > 0.0)) return 0;  // cold start: no throughput history yet

  const bool has_prev = state.chunk_index > 0;
  const double prev_quality = quality(state.last_level, qoe_cfg);

  std::vector<std::size_t> seq(horizon, 0);
  std::size_t best_first = 0;
  double best_total = -std::numeric_limits<double>::infinity();
  while (true) {
    double buffer = state.buffer_s;
    double total = 0.0;
    double last_quality = prev_quality;
    for (std::size_t k = 0; k < horizon; ++k) {
      const std::size_t chunk =
          std::min(state.chunk_index + k, video.num_chunks - 1);
      const double size_mb = video.chunk_sizes_mb[seq[k]][chunk];
      const double dt = size_mb / estimate;
      const double rebuffer = std::max(dt - buffer, 0.0);
      buffer = std::max(buffer - dt, 0.0) + video.chunk_duration_s;
      buffer = std::min(buffer, video.buffer_capacity_s);
      const double q = quality(seq[k], qoe_cfg);
      total += q - qoe_cfg.rebuffer_penalty * rebuffer;
      if (k > 0 || has_prev) total -= std::abs(q - last_quality);
      last_quality = q;
    }
    if (total > best_total) {
      best_total = total;
      best_first = seq[0];
    }
    // next sequence in lexicographic order
    std::size_t pos = horizon;
    while (pos-- > 0) {
      if (++seq[pos] < levels) break;
      seq[pos] = 0;
      if (pos == 0) return best_first;
    }
  }
}

// Tracks |predicted - observed| / observed for RobustMPC's normalization.
struct MpcErrorTracker {
  std::vector<double> errors;

  void record(double predicted_mbps, double observed_mbps) {
    if (predicted_mbps <= 0.0) return;  // nothing was predicted yet
    const double denom = std::max(observed_mbps, 1e-9);
    errors.push_back(std::abs(predicted_mbps - observed_mbps) / denom);
  }
};

}  // namespace abr
