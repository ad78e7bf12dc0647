#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "abr/harness.hpp"

using namespace abr;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "abr_harness_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small, fast training setup: 3 traces, short videos, narrow network.
TrainConfig small_config(const fs::path& dir, std::size_t epochs) {
  TrainConfig cfg;
  cfg.hp.epochs = epochs;
  cfg.hp.hidden_sizes = {8};
  cfg.hp.beta_schedule = {0.5, 0.1};
  cfg.video = make_default_video();
  cfg.video.num_chunks = 10;
  fill_default_chunk_sizes(cfg.video);
  cfg.qoe_cfg = make_qoe_config(QoEVariant::kLinear, cfg.video);

  SyntheticTraceSpec spec;
  spec.num_traces = 5;
  spec.duration_s = 80;
  spec.seed = 4242;
  auto traces = generate_synthetic(spec);
  cfg.train_traces.assign(traces.begin(), traces.begin() + 3);
  cfg.val_traces.assign(traces.begin() + 3, traces.end());
  cfg.val_interval = 5;
  cfg.seed = 7;
  cfg.checkpoint_dir = dir;
  return cfg;
}

}  // namespace

TEST_CASE("rollouts are deterministic", "[harness]") {
  const auto cfg = small_config(fresh_dir("rollout"), 0);
  const ParamSet actor =
      make_mlp({state_dim(cfg.video.levels()), 8, cfg.video.levels()}, 5);
  Rng a(3), b(3);
  const Rollout r1 =
      run_policy_episode(actor, cfg.train_traces[0], cfg.video, cfg.loss,
                         cfg.qoe_cfg, 11, ActionMode::kSample, &a);
  const Rollout r2 =
      run_policy_episode(actor, cfg.train_traces[0], cfg.video, cfg.loss,
                         cfg.qoe_cfg, 11, ActionMode::kSample, &b);
  REQUIRE(r1.episode.actions == r2.episode.actions);
  REQUIRE(r1.episode.rewards == r2.episode.rewards);
  CHECK(r1.episode.length() == cfg.video.num_chunks);
  CHECK(r1.episode.terminal);
}

TEST_CASE("zero-epoch training leaves only the initial checkpoint",
          "[harness]") {
  const auto dir = fresh_dir("zero_epochs");
  const auto cfg = small_config(dir, 0);
  const TrainReport report = train(cfg, TrainMode::kAlisa);
  CHECK(report.epochs.empty());
  CHECK(report.validations.empty());
  CHECK(fs::exists(dir / "best.ckpt"));
  const Checkpoint ckpt = load_checkpoint(dir / "best.ckpt");
  CHECK(ckpt.actor.layer_sizes ==
        std::vector<std::size_t>{state_dim(6), 8, 6});
}

TEST_CASE("single-actor training is bitwise reproducible", "[harness]") {
  const auto dir1 = fresh_dir("repro1");
  const auto dir2 = fresh_dir("repro2");
  const TrainReport r1 = train(small_config(dir1, 20), TrainMode::kAlisa);
  const TrainReport r2 = train(small_config(dir2, 20), TrainMode::kAlisa);

  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (std::size_t i = 0; i < r1.epochs.size(); ++i) {
    CHECK(r1.epochs[i].episode_reward == r2.epochs[i].episode_reward);
  }
  CHECK(r1.best_val_qoe == r2.best_val_qoe);
  CHECK(slurp(dir1 / "best.ckpt") == slurp(dir2 / "best.ckpt"));
  CHECK(slurp(dir1 / "final.ckpt") == slurp(dir2 / "final.ckpt"));

  write_train_report_csv(dir1 / "report.csv", r1);
  write_train_report_csv(dir2 / "report.csv", r2);
  CHECK(slurp(dir1 / "report.csv") == slurp(dir2 / "report.csv"));
}

TEST_CASE("on-policy alisa equals the forced n-step path bitwise",
          "[harness]") {
  const auto dir1 = fresh_dir("onpolicy");
  const auto dir2 = fresh_dir("forced");
  TrainConfig cfg1 = small_config(dir1, 25);
  cfg1.hp.sync_interval = 1;
  cfg1.hp.actors = 1;
  TrainConfig cfg2 = cfg1;
  cfg2.checkpoint_dir = dir2;
  cfg2.hp.force_on_policy = true;

  const TrainReport r1 = train(cfg1, TrainMode::kAlisa);
  const TrainReport r2 = train(cfg2, TrainMode::kAlisa);
  CHECK(slurp(dir1 / "final.ckpt") == slurp(dir2 / "final.ckpt"));
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (std::size_t i = 0; i < r1.epochs.size(); ++i) {
    CHECK(r1.epochs[i].episode_reward == r2.epochs[i].episode_reward);
  }
}

TEST_CASE("behaviour snapshots lag by at most the sync interval", "[harness]") {
  const auto dir = fresh_dir("lag");
  TrainConfig cfg = small_config(dir, 24);
  cfg.hp.sync_interval = 4;
  cfg.hp.actors = 2;
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  cfg.episode_observer = [&](std::size_t epoch, const Episode& ep) {
    seen.emplace_back(epoch, ep.policy_version);
  };
  train(cfg, TrainMode::kAlisa);
  REQUIRE(seen.size() == 24);
  std::size_t stale_episodes = 0;
  for (const auto& [epoch, version] : seen) {
    CHECK(version <= (epoch / 4) * 4);
    if (version < epoch) ++stale_episodes;
  }
  CHECK(stale_episodes > 0);  // lag actually materializes

  // sync_interval 1 with one actor keeps behaviour fully on-policy
  TrainConfig on_policy = small_config(fresh_dir("lag_sync1"), 8);
  on_policy.hp.sync_interval = 1;
  on_policy.hp.actors = 1;
  seen.clear();
  on_policy.episode_observer = [&](std::size_t epoch, const Episode& ep) {
    seen.emplace_back(epoch, ep.policy_version);
  };
  train(on_policy, TrainMode::kAlisa);
  for (const auto& [epoch, version] : seen) {
    CHECK(version == epoch);
  }
}

TEST_CASE("vanilla mode trains and reports like alisa", "[harness]") {
  const auto dir = fresh_dir("vanilla");
  const TrainReport report = train(small_config(dir, 10), TrainMode::kVanilla);
  REQUIRE(report.epochs.size() == 10);
  double prev_max = -std::numeric_limits<double>::infinity();
  for (const auto& row : report.epochs) {
    CHECK(row.max_reward >= prev_max);
    prev_max = row.max_reward;
  }
  double prev_best = -std::numeric_limits<double>::infinity();
  for (const auto& row : report.validations) {
    CHECK(row.best_qoe >= prev_best);
    prev_best = row.best_qoe;
  }
}

TEST_CASE("threaded training completes with the same bookkeeping",
          "[harness]") {
  const auto dir = fresh_dir("threaded");
  TrainConfig cfg = small_config(dir, 16);
  cfg.hp.actors = 2;
  cfg.hp.sync_interval = 4;
  cfg.threads = 2;
  std::size_t observed = 0;
  std::size_t version_violations = 0;
  cfg.episode_observer = [&](std::size_t epoch, const Episode& ep) {
    ++observed;
    if (ep.policy_version > epoch + 1) ++version_violations;
  };
  const TrainReport report = train(cfg, TrainMode::kAlisa);
  CHECK(report.epochs.size() == 16);
  CHECK(observed == 16);
  // a snapshot can never postdate the updates that existed when it was taken
  CHECK(version_violations == 0);
  CHECK(fs::exists(dir / "best.ckpt"));
}

TEST_CASE("train/val overlap is rejected", "[harness]") {
  TrainConfig cfg = small_config(fresh_dir("overlap"), 2);
  cfg.val_traces.push_back(cfg.train_traces.front());
  REQUIRE_THROWS_WITH(train(cfg, TrainMode::kAlisa),
                      Catch::Matchers::ContainsSubstring("overlap"));
}

TEST_CASE("evaluation is deterministic with exact summary stats",
          "[harness]") {
  const auto cfg = small_config(fresh_dir("eval"), 0);
  PolicyUnderTest policy;
  policy.algo = Algo::kBb;
  const EvalResult a =
      evaluate(policy, cfg.train_traces, cfg.video, cfg.qoe_cfg, cfg.loss);
  const EvalResult b =
      evaluate(policy, cfg.train_traces, cfg.video, cfg.qoe_cfg, cfg.loss);
  REQUIRE(a.per_trace.size() == b.per_trace.size());
  for (std::size_t i = 0; i < a.per_trace.size(); ++i) {
    CHECK(a.per_trace[i].qoe.total == b.per_trace[i].qoe.total);
  }
  double sum = 0.0;
  for (const auto& row : a.per_trace) sum += row.qoe.total;
  CHECK_THAT(a.mean_qoe,
             Catch::Matchers::WithinAbs(sum / a.per_trace.size(), 1e-12));
}

TEST_CASE("summary statistics", "[harness]") {
  CHECK(mean_of({10, 20, 30}) == 20.0);
  CHECK(median_of({30, 10, 20}) == 20.0);
  CHECK(median_of({4, 1, 3, 2}) == 2.5);
}

TEST_CASE("every algorithm evaluates end to end", "[harness]") {
  const auto cfg = small_config(fresh_dir("algos"), 0);
  const ParamSet actor =
      make_mlp({state_dim(cfg.video.levels()), 8, cfg.video.levels()}, 3);
  for (Algo algo : {Algo::kAlisa, Algo::kA3c, Algo::kBb, Algo::kRb,
                    Algo::kBola, Algo::kMpc}) {
    PolicyUnderTest policy;
    policy.algo = algo;
    policy.actor = is_learned(algo) ? &actor : nullptr;
    const EvalResult r =
        evaluate(policy, cfg.val_traces, cfg.video, cfg.qoe_cfg, cfg.loss);
    CHECK(r.per_trace.size() == cfg.val_traces.size());
    for (const auto& row : r.per_trace) {
      CHECK(std::isfinite(row.qoe.total));
    }
  }
  PolicyUnderTest missing;
  missing.algo = Algo::kAlisa;
  REQUIRE_THROWS_AS(
      evaluate(missing, cfg.val_traces, cfg.video, cfg.qoe_cfg, cfg.loss),
      std::invalid_argument);
}

TEST_CASE("cdf report emits empirical fractions", "[harness]") {
  EvalResult result;
  for (double total : {4.0, 1.0, 3.0, 2.0}) {
    result.per_trace.push_back({"t" + std::to_string(static_cast<int>(total)),
                                QoEBreakdown{total, total, 0, 0}});
  }
  const auto dir = fresh_dir("cdf");
  write_cdf_csv(dir / "cdf.csv", result);
  std::ifstream in(dir / "cdf.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "total,cumulative_fraction");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "1,0.25");
  CHECK(rows[1] == "2,0.5");
  CHECK(rows[2] == "3,0.75");
  CHECK(rows[3] == "4,1");
}

TEST_CASE("per-trace csv round trips exactly", "[harness]") {
  const auto cfg = small_config(fresh_dir("roundtrip"), 0);
  PolicyUnderTest policy;
  policy.algo = Algo::kRb;
  const EvalResult result =
      evaluate(policy, cfg.train_traces, cfg.video, cfg.qoe_cfg, cfg.loss);
  const auto dir = fresh_dir("roundtrip_csv");
  write_per_trace_csv(dir / "eval.csv", result);
  const EvalResult back = read_per_trace_csv(dir / "eval.csv");
  REQUIRE(back.per_trace.size() == result.per_trace.size());
  for (std::size_t i = 0; i < back.per_trace.size(); ++i) {
    CHECK(back.per_trace[i].trace_id == result.per_trace[i].trace_id);
    CHECK(back.per_trace[i].qoe.total == result.per_trace[i].qoe.total);
    CHECK(back.per_trace[i].qoe.quality_sum ==
          result.per_trace[i].qoe.quality_sum);
    CHECK(back.per_trace[i].qoe.rebuffer_penalty_sum ==
          result.per_trace[i].qoe.rebuffer_penalty_sum);
    CHECK(back.per_trace[i].qoe.smoothness_penalty_sum ==
          result.per_trace[i].qoe.smoothness_penalty_sum);
  }
  CHECK(back.mean_qoe == result.mean_qoe);
}

TEST_CASE("components report satisfies the mean identity", "[harness]") {
  const auto cfg = small_config(fresh_dir("components"), 0);
  std::vector<std::pair<std::string, EvalResult>> results;
  for (Algo algo : {Algo::kBb, Algo::kRb, Algo::kBola}) {
    PolicyUnderTest policy;
    policy.algo = algo;
    results.emplace_back(
        to_string(algo),
        evaluate(policy, cfg.train_traces, cfg.video, cfg.qoe_cfg, cfg.loss));
  }
  const auto dir = fresh_dir("components_csv");
  write_components_csv(dir / "components.csv", results);

  std::ifstream in(dir / "components.csv");
  std::string line;
  std::getline(in, line);  // header
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string name, q, r, s, t;
    std::getline(ls, name, ',');
    std::getline(ls, q, ',');
    std::getline(ls, r, ',');
    std::getline(ls, s, ',');
    std::getline(ls, t, ',');
    CHECK_THAT(std::stod(q) - std::stod(r) - std::stod(s),
               Catch::Matchers::WithinAbs(std::stod(t), 1e-9));
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("config files parse into settings", "[harness]") {
  const auto dir = fresh_dir("config");
  const auto path = dir / "abr.conf";
  std::ofstream(path) <<
      "# comment\n"
      "[video]\n"
      "levels = 200,400,800\n"
      "chunk_duration = 2\n"
      "num_chunks = 12\n"
      "buffer_capacity = 30\n"
      "[qoe]\n"
      "variant = log\n"
      "[train]\n"
      "gamma = 0.9\n"
      "beta = 1,0.5\n"
      "epochs = 42\n"
      "actors = 3\n"
      "sync_interval = 2\n"
      "hidden = 16,8\n"
      "seed = 99\n"
      "loss = 0.01\n"
      "[baselines]\n"
      "mpc_horizon = 3\n";
  Settings s = default_profile();
  apply_config_file(s, path);
  CHECK(s.video.bitrate_levels_kbps == std::vector<double>{200, 400, 800});
  CHECK(s.video.chunk_duration_s == 2.0);
  CHECK(s.video.num_chunks == 12);
  CHECK(s.qoe_variant == QoEVariant::kLog);
  CHECK(s.hp.gamma == 0.9);
  CHECK(s.hp.beta_schedule == std::vector<double>{1.0, 0.5});
  CHECK(s.hp.epochs == 42);
  CHECK(s.hp.actors == 3);
  CHECK(s.hp.sync_interval == 2);
  CHECK(s.hp.hidden_sizes == std::vector<std::size_t>{16, 8});
  CHECK(s.seed == 99);
  CHECK(s.loss.loss_probability == 0.01);
  CHECK(s.baseline.mpc_horizon == 3);

  const VideoSpec video = s.make_video();
  CHECK(video.chunk_sizes_mb.size() == 3);
  const QoEConfig qoe = s.make_qoe();
  CHECK(qoe.rebuffer_penalty == 2.66);  // log default kicks in
}

TEST_CASE("config errors carry file and line context", "[harness]") {
  const auto dir = fresh_dir("config_err");
  const auto bad_key = dir / "bad_key.conf";
  std::ofstream(bad_key) << "[train]\nnot_a_key = 1\n";
  Settings s;
  REQUIRE_THROWS_WITH(apply_config_file(s, bad_key),
                      Catch::Matchers::ContainsSubstring(":2"));

  const auto bad_line = dir / "bad_line.conf";
  std::ofstream(bad_line) << "[train]\ngamma 0.9\n";
  REQUIRE_THROWS_WITH(apply_config_file(s, bad_line),
                      Catch::Matchers::ContainsSubstring("key = value"));

  REQUIRE_THROWS(apply_config_file(s, dir / "missing.conf"));
}
