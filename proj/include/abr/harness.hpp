#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "abr/baselines.hpp"
#include "abr/common.hpp"
#include "abr/env.hpp"
#include "abr/net.hpp"
#include "abr/qoe.hpp"
#include "abr/trace.hpp"
#include "abr/vtrace.hpp"

namespace abr {

enum class TrainMode { kAlisa, kVanilla };
enum class Algo { kAlisa, kA3c, kBb, kRb, kBola, kMpc };

inline const char* to_string(Algo a) {
  switch (a) {
    case Algo::kAlisa: return "alisa";
    case Algo::kA3c: return "a3c";
    case Algo::kBb: return "bb";
    case Algo::kRb: return "rb";
    case Algo::kBola: return "bola";
    case Algo::kMpc: return "mpc";
  }
  return "?";
}

inline Algo parse_algo(const std::string& s) {
  if (s == "alisa") return Algo::kAlisa;
  if (s == "a3c") return Algo::kA3c;
  if (s == "bb") return Algo::kBb;
  if (s == "rb") return Algo::kRb;
  if (s == "bola") return Algo::kBola;
  if (s == "mpc") return Algo::kMpc;
  throw std::invalid_argument("unknown algorithm: '" + s + "'");
}

inline bool is_learned(Algo a) { return a == Algo::kAlisa || a == Algo::kA3c; }

// ---------------------------------------------------------------------------
// Episode rollout shared by training, validation, and evaluation.
// ---------------------------------------------------------------------------

struct Rollout {
  Episode episode;
  std::vector<StepOutcome> outcomes;
};

inline Rollout run_policy_episode(const ParamSet& actor,
                                  const NetworkTrace& trace,
                                  const VideoSpec& video, const LossModel& loss,
                                  const QoEConfig& qoe_cfg,
                                  std::uint64_t env_seed, ActionMode mode,
                                  Rng* rng, std::size_t policy_version = 0) {
  StreamEnv env(trace, video, loss, env_seed);
  Rollout r;
  r.episode.policy_version = policy_version;
  std::optional<std::size_t> prev_level;
  while (!env.done()) {
    const StreamState state = env.state();
    const auto probs = policy_forward(actor, state);
    const std::size_t action = (mode == ActionMode::kGreedy)
                                   ? argmax_lowest(probs)
                                   : sample_index(probs, *rng);
    StepOutcome outcome = env.step(action);
    r.episode.states.push_back(state);
    r.episode.actions.push_back(action);
    r.episode.behaviour_probs.push_back(probs);
    r.episode.rewards.push_back(
        step_reward(prev_level, action, outcome.rebuffer_time_s, qoe_cfg));
    prev_level = action;
    r.outcomes.push_back(std::move(outcome));
  }
  r.episode.bootstrap_state = env.state();
  r.episode.terminal = true;
  return r;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct TrainConfig {
  Hyperparams hp;
  std::vector<NetworkTrace> train_traces;
  std::vector<NetworkTrace> val_traces;
  QoEConfig qoe_cfg;
  VideoSpec video;
  LossModel loss;
  std::uint64_t seed = 1;
  std::size_t val_interval = 100;
  // Greedy rollouts per validation trace, each from its own deterministic
  // playhead offset; more rollouts make model selection less noisy.
  std::size_t val_rollouts = 3;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::size_t threads = 1;  // >1 runs hp.actors real actor threads
  // Invoked with every episode the learner consumes; handy for inspecting
  // policy-version lag in tests.
  std::function<void(std::size_t epoch, const Episode&)> episode_observer;
};

struct EpochRow {
  std::size_t epoch = 0;
  double episode_reward = 0.0;
  double max_reward = 0.0;  // running maximum of episode rewards
  double beta = 0.0;
};

struct ValidationRow {
  std::size_t epoch = 0;
  double mean_qoe = 0.0;
  double best_qoe = 0.0;  // running maximum of validation means
};

struct TrainReport {
  std::vector<EpochRow> epochs;
  std::vector<ValidationRow> validations;
  std::string best_checkpoint;   // highest validation QoE
  std::string final_checkpoint;  // parameters after the last update
  double best_val_qoe = 0.0;
  // Diagnostics only; never written to report files so runs stay
  // byte-comparable.
  double mean_epoch_seconds = 0.0;
};

namespace detail {

// seed-stream tags
inline constexpr std::uint64_t kTagTracePick = 0x7069636bULL;
inline constexpr std::uint64_t kTagEnv = 0x65707364ULL;
inline constexpr std::uint64_t kTagActions = 0x61637473ULL;
inline constexpr std::uint64_t kTagValidation = 0x76616c64ULL;
inline constexpr std::uint64_t kTagEval = 0x6576616cULL;

inline std::uint64_t actor_stream_seed(std::uint64_t seed, std::uint64_t tag,
                                       std::size_t actor_id,
                                       std::size_t actor_episode) {
  return derive_seed(derive_seed(seed, tag, actor_id), tag + 1, actor_episode);
}

struct LearnerState {
  ParamSet actor;
  ParamSet critic;
  std::unique_ptr<Optimizer> actor_opt;
  std::unique_ptr<Optimizer> critic_opt;
};

inline void clip_by_global_norm(Gradients& grads, double cap) {
  if (cap <= 0.0) return;
  const double norm = gradient_norm(grads);
  if (norm > cap) scale_gradients(grads, cap / norm);
}

inline void learner_update(LearnerState& nets, const Episode& episode,
                           TrainMode mode, const Hyperparams& hp, double beta) {
  Gradients actor_grads;
  Gradients critic_grads;
  if (mode == TrainMode::kAlisa) {
    const VTraceResult vt = compute_vtrace(episode, nets.actor, nets.critic, hp);
    actor_grads = actor_gradients(episode, vt, nets.actor, beta);
    critic_grads = critic_gradients(episode, vt, nets.critic);
  } else {
    const auto adv = vanilla_advantages(episode, nets.critic, hp.gamma);
    const auto targets = vanilla_critic_targets(episode, nets.critic, hp.gamma);
    actor_grads = actor_gradients(episode, adv, nets.actor, beta);
    critic_grads = critic_gradients(episode, targets, nets.critic);
  }
  clip_by_global_norm(actor_grads, hp.grad_clip);
  clip_by_global_norm(critic_grads, hp.grad_clip);
  nets.actor_opt->step(nets.actor, actor_grads, hp.actor_lr);      // ascent
  nets.critic_opt->step(nets.critic, critic_grads, -hp.critic_lr); // descent
}

inline double validation_mean(const LearnerState& nets, const TrainConfig& cfg) {
  const std::size_t rollouts = std::max<std::size_t>(cfg.val_rollouts, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < cfg.val_traces.size(); ++i) {
    for (std::size_t k = 0; k < rollouts; ++k) {
      const auto r = run_policy_episode(
          nets.actor, cfg.val_traces[i], cfg.video, cfg.loss, cfg.qoe_cfg,
          derive_seed(cfg.seed, kTagValidation, i * 1000 + k),
          ActionMode::kGreedy, nullptr);
      sum += episode_qoe(r.outcomes, cfg.qoe_cfg).total;
    }
  }
  return sum / static_cast<double>(cfg.val_traces.size() * rollouts);
}

inline void check_disjoint(const TrainConfig& cfg) {
  for (const auto& t : cfg.train_traces) {
    for (const auto& v : cfg.val_traces) {
      if (t.id == v.id) {
        throw std::invalid_argument("train/val trace sets overlap on '" +
                                    t.id + "'");
      }
    }
  }
}

// Deterministic work descriptor for episode e of the global schedule.
struct EpisodeSlot {
  std::size_t actor_id = 0;
  std::size_t actor_episode = 0;
  std::size_t trace_index = 0;
  std::uint64_t env_seed = 0;
  std::uint64_t action_seed = 0;
};

inline EpisodeSlot episode_slot(const TrainConfig& cfg, std::size_t actor_id,
                                std::size_t actor_episode) {
  EpisodeSlot slot;
  slot.actor_id = actor_id;
  slot.actor_episode = actor_episode;
  Rng pick(actor_stream_seed(cfg.seed, kTagTracePick, actor_id, actor_episode));
  slot.trace_index = static_cast<std::size_t>(
      uniform_index(pick, cfg.train_traces.size()));
  slot.env_seed = actor_stream_seed(cfg.seed, kTagEnv, actor_id, actor_episode);
  slot.action_seed =
      actor_stream_seed(cfg.seed, kTagActions, actor_id, actor_episode);
  return slot;
}

}  // namespace detail

// Actor-learner training loop.  The learner publishes its parameters every
// hp.sync_interval updates, and each actor refreshes its behaviour snapshot
// from the published copy every hp.sync_interval episodes of its own, so
// sync_interval > 1 leaves actors acting on stale policies and the lag
// compounds with the actor count.  The snapshot behind episode e is never
// newer than update floor(e / sync_interval) * sync_interval.  With
// cfg.threads == 1 the actor pool is simulated round-robin and the whole run
// is a pure function of (config, seed); with threads > 1 real actor threads
// feed a queue and arrival order is scheduler-dependent.
inline TrainReport train(const TrainConfig& cfg, TrainMode mode) {
  validate_hyperparams(cfg.hp);
  validate_video(cfg.video);
  validate_qoe(cfg.qoe_cfg);
  validate_loss(cfg.loss);
  if (cfg.train_traces.empty()) {
    throw std::invalid_argument("training needs at least one trace");
  }
  if (cfg.val_traces.empty()) {
    throw std::invalid_argument("training needs at least one validation trace");
  }
  if (cfg.val_interval == 0) {
    throw std::invalid_argument("val_interval must be > 0");
  }
  detail::check_disjoint(cfg);

  const std::size_t input_dim = state_dim(cfg.video.levels());
  std::vector<std::size_t> actor_sizes{input_dim};
  actor_sizes.insert(actor_sizes.end(), cfg.hp.hidden_sizes.begin(),
                     cfg.hp.hidden_sizes.end());
  actor_sizes.push_back(cfg.video.levels());
  std::vector<std::size_t> critic_sizes{input_dim};
  critic_sizes.insert(critic_sizes.end(), cfg.hp.hidden_sizes.begin(),
                      cfg.hp.hidden_sizes.end());
  critic_sizes.push_back(1);

  detail::LearnerState nets;
  nets.actor = make_mlp(actor_sizes, derive_seed(cfg.seed, 0x6163746fULL));
  nets.critic = make_mlp(critic_sizes, derive_seed(cfg.seed, 0x63726974ULL));
  nets.actor_opt = make_optimizer(cfg.hp.optimizer);
  nets.critic_opt = make_optimizer(cfg.hp.optimizer);

  std::filesystem::create_directories(cfg.checkpoint_dir);
  const auto best_path = cfg.checkpoint_dir / "best.ckpt";
  save_checkpoint(best_path, nets.actor, nets.critic);

  TrainReport report;
  report.best_checkpoint = best_path.string();
  report.best_val_qoe = -std::numeric_limits<double>::infinity();

  const std::size_t epochs = cfg.hp.epochs;
  const auto t0 = std::chrono::steady_clock::now();
  double max_reward = -std::numeric_limits<double>::infinity();

  ParamSet published = nets.actor;
  std::size_t published_version = 0;

  const auto consume = [&](std::size_t epoch, const Episode& episode) {
    if (cfg.episode_observer) cfg.episode_observer(epoch, episode);
    const double beta = beta_at(cfg.hp, epoch, epochs);
    try {
      detail::learner_update(nets, episode, mode, cfg.hp, beta);
    } catch (const std::exception& e) {
      throw std::runtime_error("epoch " + std::to_string(epoch) + ": " +
                               e.what());
    }
    double episode_reward = 0.0;
    for (double r : episode.rewards) episode_reward += r;
    max_reward = std::max(max_reward, episode_reward);
    report.epochs.push_back({epoch, episode_reward, max_reward, beta});

    if ((epoch + 1) % cfg.val_interval == 0 || epoch + 1 == epochs) {
      const double mean_qoe = detail::validation_mean(nets, cfg);
      if (mean_qoe > report.best_val_qoe) {
        report.best_val_qoe = mean_qoe;
        save_checkpoint(best_path, nets.actor, nets.critic);
      }
      report.validations.push_back({epoch, mean_qoe, report.best_val_qoe});
      ABR_LOG_DEBUG("epoch %zu: val %.4f best %.4f", epoch, mean_qoe,
                    report.best_val_qoe);
    }
  };

  if (cfg.threads <= 1) {
    std::vector<ParamSet> snapshots(cfg.hp.actors, nets.actor);
    std::vector<std::size_t> snapshot_versions(cfg.hp.actors, 0);
    for (std::size_t e = 0; e < epochs; ++e) {
      if (e % cfg.hp.sync_interval == 0) {
        published = nets.actor;
        published_version = e;
      }
      const std::size_t actor_id = e % cfg.hp.actors;
      const std::size_t actor_episode = e / cfg.hp.actors;
      if (actor_episode % cfg.hp.sync_interval == 0) {
        snapshots[actor_id] = published;
        snapshot_versions[actor_id] = published_version;
      }
      const auto slot = detail::episode_slot(cfg, actor_id, actor_episode);
      Rng action_rng(slot.action_seed);
      Rollout r;
      try {
        r = run_policy_episode(snapshots[actor_id],
                               cfg.train_traces[slot.trace_index], cfg.video,
                               cfg.loss, cfg.qoe_cfg, slot.env_seed,
                               ActionMode::kSample, &action_rng,
                               snapshot_versions[actor_id]);
      } catch (const std::exception& ex) {
        throw std::runtime_error("epoch " + std::to_string(e) +
                                 ": episode failed: " + ex.what());
      }
      consume(e, r.episode);
    }
  } else {
    // Real actor workers racing a single learner through a bounded queue.
    std::mutex mu;
    std::condition_variable cv_push, cv_pop;
    std::deque<Episode> queue;
    const std::size_t queue_cap = 2 * cfg.hp.actors;
    std::size_t scheduled = 0;  // episodes handed to actors
    bool failed = false;
    std::string failure;

    auto worker = [&](std::size_t actor_id) {
      std::size_t actor_episode = 0;
      ParamSet snapshot;
      std::size_t version = 0;
      while (true) {
        {
          std::unique_lock<std::mutex> lock(mu);
          if (failed || scheduled >= epochs) return;
          ++scheduled;
          if (actor_episode % cfg.hp.sync_interval == 0) {
            snapshot = published;
            version = published_version;
          }
        }
        const auto slot = detail::episode_slot(cfg, actor_id, actor_episode);
        ++actor_episode;
        try {
          Rng action_rng(slot.action_seed);
          Rollout r = run_policy_episode(
              snapshot, cfg.train_traces[slot.trace_index], cfg.video,
              cfg.loss, cfg.qoe_cfg, slot.env_seed, ActionMode::kSample,
              &action_rng, version);
          std::unique_lock<std::mutex> lock(mu);
          cv_push.wait(lock,
                       [&] { return queue.size() < queue_cap || failed; });
          if (failed) return;
          queue.push_back(std::move(r.episode));
          cv_pop.notify_all();
        } catch (const std::exception& ex) {
          std::unique_lock<std::mutex> lock(mu);
          failed = true;
          failure = ex.what();
          cv_pop.notify_all();
          cv_push.notify_all();
          return;
        }
      }
    };

    std::vector<std::thread> workers;
    workers.reserve(cfg.hp.actors);
    for (std::size_t k = 0; k < cfg.hp.actors; ++k) {
      workers.emplace_back(worker, k);
    }
    try {
      for (std::size_t e = 0; e < epochs; ++e) {
        Episode episode;
        {
          std::unique_lock<std::mutex> lock(mu);
          cv_pop.wait(lock, [&] { return !queue.empty() || failed; });
          if (failed) throw std::runtime_error("actor failed: " + failure);
          episode = std::move(queue.front());
          queue.pop_front();
          cv_push.notify_all();
        }
        consume(e, episode);
        if ((e + 1) % cfg.hp.sync_interval == 0) {
          std::unique_lock<std::mutex> lock(mu);
          published = nets.actor;
          published_version = e + 1;
        }
      }
    } catch (...) {
      {
        std::unique_lock<std::mutex> lock(mu);
        failed = true;
        cv_push.notify_all();
        cv_pop.notify_all();
      }
      for (auto& w : workers) w.join();
      throw;
    }
    {
      std::unique_lock<std::mutex> lock(mu);
      failed = true;  // drain remaining workers
      cv_push.notify_all();
      cv_pop.notify_all();
    }
    for (auto& w : workers) w.join();
  }

  const auto t1 = std::chrono::steady_clock::now();
  if (epochs > 0) {
    report.mean_epoch_seconds =
        std::chrono::duration<double>(t1 - t0).count() /
        static_cast<double>(epochs);
  }
  const auto final_path = cfg.checkpoint_dir / "final.ckpt";
  save_checkpoint(final_path, nets.actor, nets.critic);
  report.final_checkpoint = final_path.string();
  return report;
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

struct PolicyUnderTest {
  Algo algo = Algo::kBb;
  const ParamSet* actor = nullptr;  // required for alisa / a3c
  BaselineConfig baseline;
};

struct TraceEval {
  std::string trace_id;
  QoEBreakdown qoe;
};

struct EvalResult {
  std::vector<TraceEval> per_trace;
  double mean_qoe = 0.0;
  double median_qoe = 0.0;
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Greedy deterministic execution of a policy or baseline over a trace set.
inline EvalResult evaluate(const PolicyUnderTest& policy,
                           const std::vector<NetworkTrace>& traces,
                           const VideoSpec& video, const QoEConfig& qoe_cfg,
                           const LossModel& loss, std::uint64_t seed = 0) {
  if (traces.empty()) {
    throw std::invalid_argument("evaluate(): empty trace set");
  }
  if (is_learned(policy.algo) && policy.actor == nullptr) {
    throw std::invalid_argument("evaluate(): learned policy needs parameters");
  }
  EvalResult result;
  std::vector<double> totals;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const std::uint64_t env_seed = derive_seed(seed, detail::kTagEval, i);
    std::vector<StepOutcome> outcomes;
    if (is_learned(policy.algo)) {
      outcomes = run_policy_episode(*policy.actor, traces[i], video, loss,
                                    qoe_cfg, env_seed, ActionMode::kGreedy,
                                    nullptr)
                     .outcomes;
    } else {
      StreamEnv env(traces[i], video, loss, env_seed);
      MpcErrorTracker tracker;
      while (!env.done()) {
        const StreamState& state = env.state();
        std::size_t action = 0;
        double predicted = 0.0;
        switch (policy.algo) {
          case Algo::kBb:
            action = bb_select(state, policy.baseline);
            break;
          case Algo::kRb:
            action = rb_select(state, policy.baseline, video);
            break;
          case Algo::kBola:
            action = bola_select(state, policy.baseline, video);
            break;
          case Algo::kMpc:
            predicted =
                harmonic_mean_recent(state.throughput_mbps, policy.baseline.rb_window);
            action = mpc_select(state, policy.baseline, video, qoe_cfg,
                                tracker.errors);
            break;
          default:
            break;
        }
        const StepOutcome outcome = env.step(action);
        if (policy.algo == Algo::kMpc) {
          tracker.record(predicted, outcome.next_state.throughput_mbps[0]);
        }
        outcomes.push_back(outcome);
      }
    }
    const QoEBreakdown b = episode_qoe(outcomes, qoe_cfg);
    result.per_trace.push_back({traces[i].id, b});
    totals.push_back(b.total);
  }
  result.mean_qoe = mean_of(totals);
  result.median_qoe = median_of(totals);
  return result;
}

// ---------------------------------------------------------------------------
// Report emission.  All numeric cells are written with round-trip precision
// so re-parsing a report reproduces the in-memory values exactly.
// ---------------------------------------------------------------------------

inline void write_per_trace_csv(const std::filesystem::path& path,
                                const EvalResult& result) {
  if (result.per_trace.empty()) {
    throw std::invalid_argument("refusing to write empty report");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "trace_id,total,quality_sum,rebuffer_penalty_sum,smoothness_penalty_sum\n";
  for (const auto& row : result.per_trace) {
    out << row.trace_id << ',' << format_exact(row.qoe.total) << ','
        << format_exact(row.qoe.quality_sum) << ','
        << format_exact(row.qoe.rebuffer_penalty_sum) << ','
        << format_exact(row.qoe.smoothness_penalty_sum) << '\n';
  }
}

inline EvalResult read_per_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty report: " + path.string());
  }
  EvalResult result;
  std::vector<double> totals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TraceEval row;
    std::string field;
    std::getline(ls, row.trace_id, ',');
    std::getline(ls, field, ',');
    row.qoe.total = std::stod(field);
    std::getline(ls, field, ',');
    row.qoe.quality_sum = std::stod(field);
    std::getline(ls, field, ',');
    row.qoe.rebuffer_penalty_sum = std::stod(field);
    std::getline(ls, field, ',');
    row.qoe.smoothness_penalty_sum = std::stod(field);
    totals.push_back(row.qoe.total);
    result.per_trace.push_back(std::move(row));
  }
  if (result.per_trace.empty()) {
    throw std::runtime_error("report has no rows: " + path.string());
  }
  result.mean_qoe = mean_of(totals);
  result.median_qoe = median_of(totals);
  return result;
}

inline void write_cdf_csv(const std::filesystem::path& path,
                          const EvalResult& result) {
  if (result.per_trace.empty()) {
    throw std::invalid_argument("refusing to write empty report");
  }
  std::vector<double> totals;
  for (const auto& row : result.per_trace) totals.push_back(row.qoe.total);
  std::sort(totals.begin(), totals.end());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "total,cumulative_fraction\n";
  for (std::size_t i = 0; i < totals.size(); ++i) {
    out << format_exact(totals[i]) << ','
        << format_exact(static_cast<double>(i + 1) /
                        static_cast<double>(totals.size()))
        << '\n';
  }
}

// Per-algorithm means of the QoE components.
inline void write_components_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, EvalResult>>& results) {
  if (results.empty()) {
    throw std::invalid_argument("refusing to write empty report");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "algorithm,mean_quality,mean_rebuffer_penalty,mean_smoothness_penalty,"
         "mean_total\n";
  for (const auto& [name, result] : results) {
    double q = 0.0, r = 0.0, s = 0.0, t = 0.0;
    for (const auto& row : result.per_trace) {
      q += row.qoe.quality_sum;
      r += row.qoe.rebuffer_penalty_sum;
      s += row.qoe.smoothness_penalty_sum;
      t += row.qoe.total;
    }
    const auto n = static_cast<double>(result.per_trace.size());
    out << name << ',' << format_exact(q / n) << ',' << format_exact(r / n)
        << ',' << format_exact(s / n) << ',' << format_exact(t / n) << '\n';
  }
}

inline void write_train_report_csv(const std::filesystem::path& path,
                                   const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,episode_reward,max_reward,beta\n";
  for (const auto& row : report.epochs) {
    out << row.epoch << ',' << format_exact(row.episode_reward) << ','
        << format_exact(row.max_reward) << ',' << format_exact(row.beta)
        << '\n';
  }
}

inline void write_validation_csv(const std::filesystem::path& path,
                                 const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,mean_val_qoe,best_val_qoe\n";
  for (const auto& row : report.validations) {
    out << row.epoch << ',' << format_exact(row.mean_qoe) << ','
        << format_exact(row.best_qoe) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Configuration file: flat `key = value` pairs under [video], [train],
// [qoe], and [baselines] sections.  Every key has a default; command-line
// flags override file values.
// ---------------------------------------------------------------------------

struct Settings {
  VideoSpec video;  // chunk size table filled from size_variation/size_seed
  double size_variation = 0.1;
  std::uint64_t size_seed = 9001;
  Hyperparams hp;
  QoEVariant qoe_variant = QoEVariant::kLinear;
  std::optional<double> rebuffer_penalty_override;
  std::vector<double> hd_table = {1, 2, 3, 12, 15, 20};
  LossModel loss;
  std::uint64_t seed = 1;
  std::size_t val_interval = 100;
  std::size_t val_rollouts = 3;
  std::size_t threads = 1;
  BaselineConfig baseline;

  VideoSpec make_video() const {
    VideoSpec v = video;
    fill_default_chunk_sizes(v, size_variation, size_seed);
    return v;
  }

  QoEConfig make_qoe() const {
    QoEConfig q = make_qoe_config(qoe_variant, video);
    q.hd_quality_table = hd_table;
    if (rebuffer_penalty_override.has_value()) {
      q.rebuffer_penalty = *rebuffer_penalty_override;
    }
    validate_qoe(q);
    return q;
  }
};

// The desk-scale defaults used by the training and comparison tooling.
// The gradient cap is load-bearing: the QoE reward has heavy negative tails
// (deep-fade downloads) that otherwise turn single episodes into policy
// collapses at these learning rates.
inline Settings default_profile() {
  Settings s;
  s.hp.epochs = 5000;
  s.hp.actors = 2;
  s.hp.sync_interval = 4;
  s.hp.grad_clip = 200.0;
  return s;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::invalid_argument("empty list value: '" + s + "'");
  return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (double v : parse_double_list(s)) {
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace detail

inline QoEVariant parse_qoe_variant(const std::string& s) {
  if (s == "linear" || s == "lin") return QoEVariant::kLinear;
  if (s == "log") return QoEVariant::kLog;
  if (s == "hd") return QoEVariant::kHd;
  throw std::invalid_argument("unknown QoE variant: '" + s + "'");
}

// Applies one `section.key = value` setting; throws on unknown keys so
// config typos fail loudly.
inline void apply_setting(Settings& s, const std::string& section,
                          const std::string& key, const std::string& value) {
  const std::string full = section + "." + key;
  try {
    if (full == "video.levels") {
      s.video.bitrate_levels_kbps = detail::parse_double_list(value);
    } else if (full == "video.chunk_duration") {
      s.video.chunk_duration_s = std::stod(value);
    } else if (full == "video.num_chunks") {
      s.video.num_chunks = std::stoul(value);
    } else if (full == "video.buffer_capacity") {
      s.video.buffer_capacity_s = std::stod(value);
    } else if (full == "video.size_variation") {
      s.size_variation = std::stod(value);
    } else if (full == "video.size_seed") {
      s.size_seed = std::stoull(value);
    } else if (full == "qoe.variant") {
      s.qoe_variant = parse_qoe_variant(value);
    } else if (full == "qoe.rebuffer_penalty") {
      s.rebuffer_penalty_override = std::stod(value);
    } else if (full == "qoe.hd_table") {
      s.hd_table = detail::parse_double_list(value);
    } else if (full == "train.gamma") {
      s.hp.gamma = std::stod(value);
    } else if (full == "train.actor_lr") {
      s.hp.actor_lr = std::stod(value);
    } else if (full == "train.critic_lr") {
      s.hp.critic_lr = std::stod(value);
    } else if (full == "train.beta") {
      s.hp.beta_schedule = detail::parse_double_list(value);
    } else if (full == "train.rho_bar") {
      s.hp.rho_bar = std::stod(value);
    } else if (full == "train.c_bar") {
      s.hp.c_bar = std::stod(value);
    } else if (full == "train.epochs") {
      s.hp.epochs = std::stoul(value);
    } else if (full == "train.actors") {
      s.hp.actors = std::stoul(value);
    } else if (full == "train.sync_interval") {
      s.hp.sync_interval = std::stoul(value);
    } else if (full == "train.hidden") {
      s.hp.hidden_sizes = detail::parse_size_list(value);
    } else if (full == "train.optimizer") {
      s.hp.optimizer = parse_optimizer(value);
    } else if (full == "train.grad_clip") {
      s.hp.grad_clip = std::stod(value);
    } else if (full == "train.seed") {
      s.seed = std::stoull(value);
    } else if (full == "train.val_interval") {
      s.val_interval = std::stoul(value);
    } else if (full == "train.val_rollouts") {
      s.val_rollouts = std::stoul(value);
    } else if (full == "train.threads") {
      s.threads = std::stoul(value);
    } else if (full == "train.loss") {
      s.loss.loss_probability = std::stod(value);
    } else if (full == "baselines.bb_reservoir") {
      s.baseline.bb_reservoir_s = std::stod(value);
    } else if (full == "baselines.bb_cushion") {
      s.baseline.bb_cushion_s = std::stod(value);
    } else if (full == "baselines.rb_window") {
      s.baseline.rb_window = std::stoul(value);
    } else if (full == "baselines.bola_utility_weight") {
      s.baseline.bola_utility_weight = std::stod(value);
    } else if (full == "baselines.bola_startup") {
      s.baseline.bola_startup = std::stod(value);
    } else if (full == "baselines.mpc_horizon") {
      s.baseline.mpc_horizon = std::stoul(value);
    } else if (full == "baselines.mpc_error_window") {
      s.baseline.mpc_error_window = std::stoul(value);
    } else {
      throw std::invalid_argument("unknown config key");
    }
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("config key '" + full + "' = '" + value +
                                "': " + e.what());
  }
}

inline void apply_config_file(Settings& s, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::string line;
  std::string section = "train";
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      apply_setting(s, section, key, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
}

}  // namespace abr
