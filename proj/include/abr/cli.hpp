#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "abr/harness.hpp"

namespace abr::cli {

namespace fs = std::filesystem;

// Flag-level overrides; precedence is flag > config file > default.
struct CommonOpts {
  std::string config_path;
  std::string traces_dir;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> loss;
  std::optional<std::string> qoe;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> actors;
  std::optional<std::size_t> sync_interval;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> val_interval;
};

inline Settings load_settings(const CommonOpts& opts) {
  Settings s = default_profile();
  if (!opts.config_path.empty()) {
    apply_config_file(s, opts.config_path);
  }
  if (opts.seed.has_value()) s.seed = *opts.seed;
  if (opts.loss.has_value()) s.loss.loss_probability = *opts.loss;
  if (opts.qoe.has_value()) s.qoe_variant = parse_qoe_variant(*opts.qoe);
  if (opts.epochs.has_value()) s.hp.epochs = *opts.epochs;
  if (opts.actors.has_value()) s.hp.actors = *opts.actors;
  if (opts.sync_interval.has_value()) s.hp.sync_interval = *opts.sync_interval;
  if (opts.threads.has_value()) s.threads = *opts.threads;
  if (opts.val_interval.has_value()) s.val_interval = *opts.val_interval;
  return s;
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string loss_label(double p) {
  std::ostringstream ss;
  ss << p;
  return ss.str();
}

inline int run_gen_traces(const CommonOpts& common, SyntheticTraceSpec spec) {
  if (common.seed.has_value()) spec.seed = *common.seed;
  const auto traces = generate_synthetic(spec);
  fs::create_directories(common.out_dir);
  for (const auto& t : traces) {
    write_trace(fs::path(common.out_dir) / (t.id + ".trace"), t);
  }
  ABR_LOG_INFO("wrote %zu traces to %s", traces.size(),
               common.out_dir.c_str());
  return 0;
}

inline int run_train(const CommonOpts& common, const std::string& val_dir,
                     const std::string& algo_name) {
  const Algo algo = parse_algo(algo_name);
  if (!is_learned(algo)) {
    throw std::invalid_argument("train supports only alisa or a3c, got '" +
                                algo_name + "'");
  }
  Settings s = load_settings(common);
  TrainConfig cfg;
  cfg.hp = s.hp;
  cfg.video = s.make_video();
  cfg.qoe_cfg = s.make_qoe();
  cfg.loss = s.loss;
  cfg.seed = s.seed;
  cfg.val_interval = s.val_interval;
  cfg.val_rollouts = s.val_rollouts;
  cfg.threads = s.threads;
  cfg.train_traces = load_trace_dir(common.traces_dir);
  cfg.val_traces = load_trace_dir(val_dir);
  cfg.checkpoint_dir = common.out_dir;
  fs::create_directories(common.out_dir);

  const TrainMode mode =
      algo == Algo::kAlisa ? TrainMode::kAlisa : TrainMode::kVanilla;
  ABR_LOG_INFO("training %s: %zu epochs, %zu traces, %zu actors, sync %zu",
               algo_name.c_str(), cfg.hp.epochs, cfg.train_traces.size(),
               cfg.hp.actors, cfg.hp.sync_interval);
  const TrainReport report = train(cfg, mode);
  write_train_report_csv(fs::path(common.out_dir) / "train_report.csv", report);
  write_validation_csv(fs::path(common.out_dir) / "val_report.csv", report);
  ABR_LOG_INFO("best validation QoE %.4f, checkpoint %s (%.3f ms/epoch)",
               report.best_val_qoe, report.best_checkpoint.c_str(),
               report.mean_epoch_seconds * 1e3);
  return 0;
}

inline PolicyUnderTest make_policy(Algo algo, const ParamSet* actor,
                                   const Settings& s) {
  PolicyUnderTest p;
  p.algo = algo;
  p.actor = actor;
  p.baseline = s.baseline;
  return p;
}

inline int run_eval(const CommonOpts& common, const std::string& algo_name,
                    const std::string& ckpt_path) {
  const Algo algo = parse_algo(algo_name);
  Settings s = load_settings(common);
  const VideoSpec video = s.make_video();
  const QoEConfig qoe_cfg = s.make_qoe();
  const auto traces = load_trace_dir(common.traces_dir);

  Checkpoint ckpt;
  PolicyUnderTest policy = make_policy(algo, nullptr, s);
  if (is_learned(algo)) {
    if (ckpt_path.empty()) {
      throw std::invalid_argument("--ckpt is required for algo '" + algo_name +
                                  "'");
    }
    ckpt = load_checkpoint(ckpt_path);
    policy.actor = &ckpt.actor;
  }

  const EvalResult result =
      evaluate(policy, traces, video, qoe_cfg, s.loss, s.seed);
  fs::create_directories(common.out_dir);
  const fs::path per_trace =
      fs::path(common.out_dir) / ("eval_" + algo_name + ".csv");
  write_per_trace_csv(per_trace, result);

  std::ofstream summary(fs::path(common.out_dir) /
                        ("eval_" + algo_name + "_summary.csv"));
  summary << "algorithm,qoe_variant,loss,mean,median\n"
          << algo_name << ',' << to_string(s.qoe_variant) << ','
          << format_exact(s.loss.loss_probability) << ','
          << format_exact(result.mean_qoe) << ','
          << format_exact(result.median_qoe) << '\n';
  ABR_LOG_INFO("%s: mean QoE %.4f over %zu traces -> %s", algo_name.c_str(),
               result.mean_qoe, result.per_trace.size(),
               per_trace.string().c_str());
  return 0;
}

// Runs every algorithm over the same traces for each (loss, variant) cell
// and emits one mean-QoE grid per variant plus component breakdowns.
inline int run_compare(const CommonOpts& common, const std::string& algos_arg,
                       const std::string& loss_arg,
                       const std::string& variants_arg,
                       const std::vector<std::string>& ckpt_args) {
  Settings s = load_settings(common);
  const VideoSpec video = s.make_video();
  const auto traces = load_trace_dir(common.traces_dir);

  std::map<std::string, Checkpoint> checkpoints;
  for (const auto& arg : ckpt_args) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--ckpt expects <algo>=<path>, got '" + arg +
                                  "'");
    }
    checkpoints[arg.substr(0, eq)] = load_checkpoint(arg.substr(eq + 1));
  }

  std::vector<Algo> algos;
  for (const auto& name : split_csv(algos_arg)) {
    const Algo a = parse_algo(name);
    if (is_learned(a) && checkpoints.find(name) == checkpoints.end()) {
      throw std::invalid_argument("compare needs --ckpt " + name +
                                  "=<path> for algo '" + name + "'");
    }
    algos.push_back(a);
  }
  if (algos.empty()) throw std::invalid_argument("--algos list is empty");

  std::vector<double> loss_grid;
  for (const auto& item : split_csv(loss_arg)) {
    loss_grid.push_back(std::stod(item));
  }
  if (loss_grid.empty()) loss_grid.push_back(0.0);

  std::vector<QoEVariant> variants;
  for (const auto& name : split_csv(variants_arg)) {
    variants.push_back(parse_qoe_variant(name));
  }
  if (variants.empty()) variants.push_back(s.qoe_variant);

  fs::create_directories(common.out_dir);
  for (const QoEVariant variant : variants) {
    Settings sv = s;
    sv.qoe_variant = variant;
    const QoEConfig qoe_cfg = sv.make_qoe();

    std::ofstream grid(fs::path(common.out_dir) /
                       (std::string("compare_") + to_string(variant) + ".csv"));
    grid << "algorithm";
    for (double p : loss_grid) grid << ",loss_" << loss_label(p);
    grid << '\n';

    std::vector<std::vector<std::pair<std::string, EvalResult>>> by_loss(
        loss_grid.size());
    for (const Algo algo : algos) {
      grid << to_string(algo);
      for (std::size_t li = 0; li < loss_grid.size(); ++li) {
        const ParamSet* actor =
            is_learned(algo) ? &checkpoints.at(to_string(algo)).actor : nullptr;
        const EvalResult result =
            evaluate(make_policy(algo, actor, sv), traces, video, qoe_cfg,
                     LossModel{loss_grid[li]}, sv.seed);
        grid << ',' << format_exact(result.mean_qoe);
        by_loss[li].emplace_back(to_string(algo), result);
      }
      grid << '\n';
    }
    for (std::size_t li = 0; li < loss_grid.size(); ++li) {
      write_components_csv(
          fs::path(common.out_dir) /
              (std::string("components_") + to_string(variant) + "_loss" +
               loss_label(loss_grid[li]) + ".csv"),
          by_loss[li]);
    }
    ABR_LOG_INFO("compare (%s): %zu algorithms x %zu loss levels",
                 to_string(variant), algos.size(), loss_grid.size());
  }
  return 0;
}

inline int run_report(const std::string& input, const std::string& format,
                      const std::string& out_dir) {
  const EvalResult result = read_per_trace_csv(input);
  fs::create_directories(out_dir);
  const std::string stem = fs::path(input).stem().string();
  if (format == "cdf") {
    write_cdf_csv(fs::path(out_dir) / (stem + "_cdf.csv"), result);
  } else if (format == "components") {
    write_components_csv(fs::path(out_dir) / (stem + "_components.csv"),
                         {{stem, result}});
  } else if (format == "csv") {
    write_per_trace_csv(fs::path(out_dir) / (stem + "_copy.csv"), result);
  } else {
    throw std::invalid_argument("unknown report format: '" + format + "'");
  }
  return 0;
}

// Entry point shared by the binary and the tests.  `args` excludes the
// program name.
inline int run(const std::vector<std::string>& args) {
  CLI::App app{"Trace-driven ABR streaming simulator and RL toolkit"};
  app.require_subcommand(1);

  CommonOpts common;
  SyntheticTraceSpec gen_spec;
  std::string val_dir, algo = "alisa", ckpt_path;
  std::string algos_arg = "alisa,a3c,bb,rb,bola,mpc";
  std::string loss_arg = "0";
  std::string variants_arg;
  std::vector<std::string> ckpt_args;
  std::string report_input, report_format = "cdf";

  const auto add_common = [&](CLI::App* sub, bool single_loss = true) {
    sub->add_option("--config", common.config_path, "configuration file");
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seed", common.seed, "master random seed");
    sub->add_option("--traces", common.traces_dir,
                    "directory of *.trace files")
        ->required();
    if (single_loss) {
      sub->add_option("--loss", common.loss,
                      "packet loss probability in [0,1)");
    }
    sub->add_option("--qoe", common.qoe, "QoE variant: linear|log|hd");
  };

  auto* gen = app.add_subcommand("gen-traces", "generate synthetic traces");
  gen->add_option("--n", gen_spec.num_traces, "number of traces");
  gen->add_option("--duration", gen_spec.duration_s, "trace duration, seconds");
  gen->add_option("--mean", gen_spec.mean_bandwidth_mbps, "mean bandwidth, Mbps");
  gen->add_option("--volatility", gen_spec.volatility, "random walk volatility");
  gen->add_option("--seed", common.seed, "master random seed");
  gen->add_option("--out", common.out_dir, "output directory");

  auto* tr = app.add_subcommand("train", "train an RL policy");
  add_common(tr);
  tr->add_option("--val-traces", val_dir, "validation trace directory")
      ->required();
  tr->add_option("--algo", algo, "alisa|a3c");
  tr->add_option("--epochs", common.epochs, "learner updates to run");
  tr->add_option("--actors", common.actors, "actor count");
  tr->add_option("--sync-interval", common.sync_interval,
                 "updates between behaviour-policy publishes");
  tr->add_option("--threads", common.threads,
                 "1 = deterministic simulation, >1 = real actor threads");
  tr->add_option("--val-interval", common.val_interval,
                 "epochs between validations");

  auto* ev = app.add_subcommand("eval", "evaluate a policy or baseline");
  add_common(ev);
  ev->add_option("--algo", algo, "alisa|a3c|bb|rb|bola|mpc");
  ev->add_option("--ckpt", ckpt_path, "checkpoint for learned policies");

  auto* cmp =
      app.add_subcommand("compare", "evaluate algorithms over a loss grid");
  add_common(cmp, /*single_loss=*/false);
  cmp->add_option("--algos", algos_arg, "comma list of algorithms");
  cmp->add_option("--loss,--loss-grid", loss_arg,
                  "comma list of loss probabilities");
  cmp->add_option("--variants", variants_arg, "comma list of QoE variants");
  cmp->add_option("--ckpt", ckpt_args, "<algo>=<path>, repeatable");

  auto* rep = app.add_subcommand("report", "derive reports from an eval CSV");
  rep->add_option("--input", report_input, "per-trace eval CSV")->required();
  rep->add_option("--format", report_format, "cdf|components|csv");
  rep->add_option("--out", common.out_dir, "output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return run_gen_traces(common, gen_spec);
    if (tr->parsed()) return run_train(common, val_dir, algo);
    if (ev->parsed()) return run_eval(common, algo, ckpt_path);
    if (cmp->parsed()) {
      return run_compare(common, algos_arg, loss_arg, variants_arg, ckpt_args);
    }
    if (rep->parsed()) {
      return run_report(report_input, report_format, common.out_dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace abr::cli
