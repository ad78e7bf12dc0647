#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "abr/common.hpp"
#include "abr/net.hpp"

namespace abr {

struct Hyperparams {
  double gamma = 0.99;
  double actor_lr = 0.0001;
  double critic_lr = 0.001;
  // Entropy weight segments spread evenly over the epoch budget; a single
  // entry means a constant weight.
  std::vector<double> beta_schedule = {1.0, 0.75, 0.5, 0.25, 0.1};
  double rho_bar = 1.0;
  double c_bar = 1.0;
  std::size_t epochs = 100000;
  std::size_t actors = 1;
  std::size_t sync_interval = 1;   // learner updates between snapshot publishes
  std::vector<std::size_t> hidden_sizes = {128};
  OptimizerKind optimizer = OptimizerKind::kSgd;
  // Global-norm gradient cap applied before each optimizer step; <= 0
  // disables it.  Tames the heavy negative tail of rebuffer penalties.
  double grad_clip = 0.0;
  // Pins every importance weight to 1, reducing the V-trace recursion to the
  // plain on-policy n-step return path.
  bool force_on_policy = false;
};

inline void validate_hyperparams(const Hyperparams& hp) {
  if (!(hp.gamma > 0.0 && hp.gamma <= 1.0)) {
    throw std::invalid_argument("gamma must be in (0, 1]");
  }
  if (hp.beta_schedule.empty()) {
    throw std::invalid_argument("beta schedule must be non-empty");
  }
  if (!(hp.rho_bar > 0.0) || !(hp.c_bar > 0.0)) {
    throw std::invalid_argument("importance weight caps must be > 0");
  }
  if (hp.actors == 0 || hp.sync_interval == 0) {
    throw std::invalid_argument("actors and sync_interval must be >= 1");
  }
}

// Entropy weight in effect at `epoch` out of `total_epochs`: schedule entry k
// covers epochs [k * total/m, (k+1) * total/m).
inline double beta_at(const Hyperparams& hp, std::size_t epoch,
                      std::size_t total_epochs) {
  const std::size_t m = hp.beta_schedule.size();
  if (m == 1 || total_epochs == 0) return hp.beta_schedule.front();
  std::size_t k = epoch * m / total_epochs;
  k = std::min(k, m - 1);
  return hp.beta_schedule[k];
}

// One actor rollout: states, the actions taken, the behaviour policy's full
// action distributions, and the per-step rewards.  `terminal` distinguishes
// a finished video (bootstrap value 0) from a truncated rollout (bootstrap
// from the critic at bootstrap_state).
struct Episode {
  std::vector<StreamState> states;
  std::vector<std::size_t> actions;
  std::vector<std::vector<double>> behaviour_probs;
  std::vector<double> rewards;
  StreamState bootstrap_state;
  bool terminal = true;
  std::size_t policy_version = 0;

  std::size_t length() const { return states.size(); }
};

inline void validate_episode(const Episode& ep) {
  const std::size_t n = ep.states.size();
  if (n == 0) throw std::invalid_argument("episode must have length >= 1");
  if (ep.actions.size() != n || ep.behaviour_probs.size() != n ||
      ep.rewards.size() != n) {
    throw std::invalid_argument("episode field lengths disagree");
  }
  for (std::size_t t = 0; t < n; ++t) {
    const auto& probs = ep.behaviour_probs[t];
    double sum = 0.0;
    for (double p : probs) sum += p;
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("behaviour probabilities at step " +
                                  std::to_string(t) + " sum to " +
                                  std::to_string(sum));
    }
    if (ep.actions[t] >= probs.size()) {
      throw std::invalid_argument("action index out of range at step " +
                                  std::to_string(t));
    }
  }
}

// Per-step V-trace quantities for one episode.
struct VTraceResult {
  std::vector<double> targets;        // v_t
  std::vector<double> rho;            // min(rho_bar, pi/mu)
  std::vector<double> c;              // min(c_bar, rho)
  std::vector<double> td;             // delta_t V
  std::vector<double> pg_advantages;  // rho_t (r_t + gamma v_{t+1} - V_t)
};

// Importance-weighted n-step value targets, filled back to front with the
// recursion v_t = V_t + delta_t V + gamma c_t (v_{t+1} - V_{t+1}).
inline VTraceResult compute_vtrace(const Episode& ep, const ParamSet& actor,
                                   const ParamSet& critic,
                                   const Hyperparams& hp) {
  validate_episode(ep);
  const std::size_t n = ep.length();
  const double gamma = hp.gamma;

  std::vector<double> values(n + 1);
  for (std::size_t t = 0; t < n; ++t) {
    values[t] = critic_forward(critic, ep.states[t]);
  }
  values[n] = ep.terminal ? 0.0 : critic_forward(critic, ep.bootstrap_state);

  VTraceResult out;
  out.rho.resize(n);
  out.c.resize(n);
  out.td.resize(n);
  out.targets.resize(n);
  out.pg_advantages.resize(n);

  for (std::size_t t = 0; t < n; ++t) {
    const double mu = ep.behaviour_probs[t][ep.actions[t]];
    if (!(mu > 0.0)) {
      throw std::domain_error("behaviour probability of taken action is zero "
                              "at step " + std::to_string(t));
    }
    if (hp.force_on_policy) {
      out.rho[t] = 1.0;
      out.c[t] = 1.0;
    } else {
      const double pi =
          policy_forward(actor, ep.states[t])[ep.actions[t]];
      out.rho[t] = std::min(hp.rho_bar, pi / mu);
      out.c[t] = std::min(hp.c_bar, out.rho[t]);
    }
    out.td[t] = out.rho[t] * (ep.rewards[t] + gamma * values[t + 1] - values[t]);
    if (!std::isfinite(out.td[t])) {
      throw std::domain_error("non-finite temporal difference at step " +
                              std::to_string(t));
    }
  }

  double next_target = values[n];  // v_n
  for (std::size_t t = n; t-- > 0;) {
    out.targets[t] = values[t] + out.td[t] +
                     gamma * out.c[t] * (next_target - values[t + 1]);
    out.pg_advantages[t] =
        out.rho[t] * (ep.rewards[t] + gamma * next_target - values[t]);
    next_target = out.targets[t];
  }
  for (double v : out.targets) {
    if (!std::isfinite(v)) {
      throw std::domain_error("non-finite v-trace target");
    }
  }
  return out;
}

// -sum p log p with the 0 log 0 := 0 convention.
inline double entropy(std::span<const double> probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw std::invalid_argument("negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("probabilities sum to " + std::to_string(sum));
  }
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// Gradient of sum_t [log pi(a_t|s_t) * advantage_t + beta H(pi(.|s_t))] with
// respect to the actor parameters; advantages are treated as constants.
inline Gradients actor_gradients(const Episode& ep,
                                 std::span<const double> advantages,
                                 const ParamSet& actor, double beta) {
  validate_episode(ep);
  if (advantages.size() != ep.length()) {
    throw std::invalid_argument("advantage count != episode length");
  }
  Gradients grads = make_zero_like(actor);
  for (std::size_t t = 0; t < ep.length(); ++t) {
    ForwardCache cache;
    const auto probs = policy_forward(actor, ep.states[t], &cache);
    const std::size_t a = ep.actions[t];
    if (a >= probs.size()) {
      throw std::invalid_argument("action out of policy range");
    }
    double h = 0.0;
    for (double p : probs) {
      if (p > 0.0) h -= p * std::log(p);
    }
    // d/dz_k of log pi(a) is one_hot(a) - p; of the entropy, -p_k(log p_k + H).
    std::vector<double> dlogits(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) {
      double d = advantages[t] * ((k == a ? 1.0 : 0.0) - probs[k]);
      if (beta != 0.0 && probs[k] > 0.0) {
        d += beta * (-probs[k] * (std::log(probs[k]) + h));
      }
      dlogits[k] = d;
    }
    backward_accumulate(actor, cache, dlogits, grads);
  }
  return grads;
}

inline Gradients actor_gradients(const Episode& ep, const VTraceResult& vtrace,
                                 const ParamSet& actor, double beta) {
  return actor_gradients(ep, vtrace.pg_advantages, actor, beta);
}

// Gradient of the regression loss 0.5 sum_t (target_t - V(s_t))^2 with
// respect to the critic parameters; targets are constants.
inline Gradients critic_gradients(const Episode& ep,
                                  std::span<const double> targets,
                                  const ParamSet& critic) {
  validate_episode(ep);
  if (targets.size() != ep.length()) {
    throw std::invalid_argument("target count != episode length");
  }
  Gradients grads = make_zero_like(critic);
  for (std::size_t t = 0; t < ep.length(); ++t) {
    ForwardCache cache;
    const double value = critic_forward(critic, ep.states[t], &cache);
    const double dl_dout = value - targets[t];
    backward_accumulate(critic, cache, std::span<const double>(&dl_dout, 1),
                        grads);
  }
  return grads;
}

inline Gradients critic_gradients(const Episode& ep, const VTraceResult& vtrace,
                                  const ParamSet& critic) {
  return critic_gradients(ep, vtrace.targets, critic);
}

// One-step TD advantages r_t + gamma V(s_{t+1}) - V(s_t), no importance
// weighting.  This is the vanilla A3C comparison path.
inline std::vector<double> vanilla_advantages(const Episode& ep,
                                              const ParamSet& critic,
                                              double gamma) {
  validate_episode(ep);
  const std::size_t n = ep.length();
  std::vector<double> values(n + 1);
  for (std::size_t t = 0; t < n; ++t) {
    values[t] = critic_forward(critic, ep.states[t]);
  }
  values[n] = ep.terminal ? 0.0 : critic_forward(critic, ep.bootstrap_state);
  std::vector<double> adv(n);
  for (std::size_t t = 0; t < n; ++t) {
    adv[t] = ep.rewards[t] + gamma * values[t + 1] - values[t];
  }
  return adv;
}

// TD(0) regression targets r_t + gamma V(s_{t+1}) for the vanilla critic.
inline std::vector<double> vanilla_critic_targets(const Episode& ep,
                                                  const ParamSet& critic,
                                                  double gamma) {
  validate_episode(ep);
  const std::size_t n = ep.length();
  std::vector<double> targets(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = (t + 1 < n)
                            ? critic_forward(critic, ep.states[t + 1])
                            : (ep.terminal
                                   ? 0.0
                                   : critic_forward(critic, ep.bootstrap_state));
    targets[t] = ep.rewards[t] + gamma * next;
  }
  return targets;
}

enum class ActionMode { kSample, kGreedy };

inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

// Greedy mode breaks ties toward the lowest index; sample mode draws from
// the policy using the caller's RNG stream.
inline std::size_t select_action(const ParamSet& actor,
                                 const StreamState& state, ActionMode mode,
                                 Rng& rng) {
  const auto probs = policy_forward(actor, state);
  if (mode == ActionMode::kGreedy) return argmax_lowest(probs);
  return sample_index(probs, rng);
}

}  // namespace abr
