#pragma once

// Shared generators and oracles for the unit and acceptance suites.  The
// oracles here deliberately re-derive quantities through independent code
// paths (finite differences, direct summation) rather than reusing library
// internals.

#include <cmath>
#include <functional>
#include <vector>

#include "abr/env.hpp"
#include "abr/net.hpp"
#include "abr/vtrace.hpp"

namespace abrtest {

inline abr::StreamState random_state(abr::Rng& rng, std::size_t levels) {
  abr::StreamState s;
  s.last_level = abr::uniform_index(rng, levels);
  s.buffer_capacity_s = 60.0;
  s.buffer_s = abr::uniform01(rng) * s.buffer_capacity_s;
  for (auto& v : s.throughput_mbps) v = abr::uniform01(rng) * 8.0;
  for (auto& v : s.download_time_s) v = abr::uniform01(rng) * 12.0;
  s.next_chunk_sizes_mb.resize(levels);
  for (auto& v : s.next_chunk_sizes_mb) v = 0.5 + abr::uniform01(rng) * 16.0;
  s.remaining_fraction = abr::uniform01(rng);
  s.chunk_index = abr::uniform_index(rng, 48);
  return s;
}

// Random distribution over `n` outcomes, bounded away from zero so
// importance ratios stay finite.
inline std::vector<double> random_distribution(abr::Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& v : p) {
    v = 0.05 + abr::uniform01(rng);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

inline abr::Episode random_episode(abr::Rng& rng, std::size_t length,
                                   std::size_t levels,
                                   bool terminal_allowed = true) {
  abr::Episode ep;
  for (std::size_t t = 0; t < length; ++t) {
    ep.states.push_back(random_state(rng, levels));
    const auto probs = random_distribution(rng, levels);
    ep.actions.push_back(abr::uniform_index(rng, levels));
    ep.behaviour_probs.push_back(probs);
    ep.rewards.push_back(abr::uniform_range(rng, -5.0, 5.0));
  }
  ep.bootstrap_state = random_state(rng, levels);
  ep.terminal = terminal_allowed && (rng() & 1);
  return ep;
}

// Central finite differences of a scalar loss over every parameter.
inline abr::Gradients finite_difference(
    const abr::ParamSet& params,
    const std::function<double(const abr::ParamSet&)>& loss, double h = 1e-5) {
  abr::Gradients fd = abr::make_zero_like(params);
  abr::ParamSet work = params;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    for (std::size_t i = 0; i < params.layers[k].weights.data.size(); ++i) {
      const double saved = work.layers[k].weights.data[i];
      work.layers[k].weights.data[i] = saved + h;
      const double up = loss(work);
      work.layers[k].weights.data[i] = saved - h;
      const double down = loss(work);
      work.layers[k].weights.data[i] = saved;
      fd.layers[k].weights.data[i] = (up - down) / (2.0 * h);
    }
    for (std::size_t i = 0; i < params.layers[k].biases.size(); ++i) {
      const double saved = work.layers[k].biases[i];
      work.layers[k].biases[i] = saved + h;
      const double up = loss(work);
      work.layers[k].biases[i] = saved - h;
      const double down = loss(work);
      work.layers[k].biases[i] = saved;
      fd.layers[k].biases[i] = (up - down) / (2.0 * h);
    }
  }
  return fd;
}

// Worst relative disagreement between two gradient sets, with a small floor
// so near-zero gradients compare on an absolute scale.
inline double max_relative_error(const abr::Gradients& a,
                                 const abr::Gradients& b,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    for (std::size_t i = 0; i < a.layers[k].weights.data.size(); ++i) {
      const double x = a.layers[k].weights.data[i];
      const double y = b.layers[k].weights.data[i];
      worst = std::max(worst, std::abs(x - y) /
                                  std::max({std::abs(x), std::abs(y), floor}));
    }
    for (std::size_t i = 0; i < a.layers[k].biases.size(); ++i) {
      const double x = a.layers[k].biases[i];
      const double y = b.layers[k].biases[i];
      worst = std::max(worst, std::abs(x - y) /
                                  std::max({std::abs(x), std::abs(y), floor}));
    }
  }
  return worst;
}

// Direct evaluation of the n-step V-trace target as an explicit double sum,
// v_j = V_j + sum_{t=j}^{n-1} gamma^{t-j} (prod_{i=j}^{t-1} c_i) delta_t.
inline std::vector<double> vtrace_direct_sum(
    const std::vector<double>& values_with_bootstrap,
    const std::vector<double>& rho, const std::vector<double>& c,
    const std::vector<double>& rewards, double gamma) {
  const std::size_t n = rewards.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    delta[t] = rho[t] * (rewards[t] + gamma * values_with_bootstrap[t + 1] -
                         values_with_bootstrap[t]);
  }
  std::vector<double> v(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = values_with_bootstrap[j];
    double discount = 1.0;
    double c_prod = 1.0;
    for (std::size_t t = j; t < n; ++t) {
      if (t > j) {
        discount *= gamma;
        c_prod *= c[t - 1];
      }
      acc += discount * c_prod * delta[t];
    }
    v[j] = acc;
  }
  return v;
}

}  // namespace abrtest
