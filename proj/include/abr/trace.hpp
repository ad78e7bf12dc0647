#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "abr/common.hpp"

namespace abr {

// A time series of bandwidth measurements replayed as the simulated network
// channel.  Immutable after construction and safe to share across threads.
struct NetworkTrace {
  std::string id;
  std::vector<double> timestamps_s;       // strictly increasing, first >= 0
  std::vector<double> bandwidths_mbps;    // all positive and finite

  std::size_t size() const { return timestamps_s.size(); }
  double first_timestamp() const { return timestamps_s.front(); }
  double last_timestamp() const { return timestamps_s.back(); }
  double duration() const { return last_timestamp() - first_timestamp(); }
};

// Expected-value packet loss: the channel rate is scaled by (1 - p).  The
// player applies a matching retransmission inflation on download times, so
// the severity grows monotonically with p.
struct LossModel {
  double loss_probability = 0.0;  // in [0, 1)
};

inline void validate_loss(const LossModel& loss) {
  if (!(loss.loss_probability >= 0.0 && loss.loss_probability < 1.0)) {
    throw std::invalid_argument("loss_probability must be in [0, 1)");
  }
}

struct SyntheticTraceSpec {
  std::size_t num_traces = 20;
  double duration_s = 320.0;          // one sample per second
  double mean_bandwidth_mbps = 2.0;
  double volatility = 0.3;            // scales the per-step random kick
  std::uint64_t seed = 1;
};

inline void validate_trace(const NetworkTrace& trace) {
  if (trace.size() < 2) {
    throw std::invalid_argument("trace '" + trace.id +
                                "': needs at least 2 samples");
  }
  if (trace.timestamps_s.size() != trace.bandwidths_mbps.size()) {
    throw std::invalid_argument("trace '" + trace.id +
                                "': timestamp/bandwidth length mismatch");
  }
  if (!(trace.timestamps_s.front() >= 0.0)) {
    throw std::invalid_argument("trace '" + trace.id +
                                "': first timestamp must be >= 0");
  }
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double bw = trace.bandwidths_mbps[i];
    if (!std::isfinite(bw) || bw <= 0.0) {
      throw std::invalid_argument("trace '" + trace.id +
                                  "': non-positive bandwidth at sample " +
                                  std::to_string(i));
    }
    if (i > 0 && !(trace.timestamps_s[i] > trace.timestamps_s[i - 1])) {
      throw std::invalid_argument("trace '" + trace.id +
                                  "': non-monotonic timestamps at sample " +
                                  std::to_string(i));
    }
  }
}

// Parses a plain-text trace file, one `<timestamp_s> <bandwidth_mbps>` pair
// per non-empty line.  The trace id is the file stem.
inline NetworkTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open trace file: " + path.string());
  }
  NetworkTrace trace;
  trace.id = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ls(line);
    double t = 0.0, bw = 0.0;
    std::string extra;
    if (!(ls >> t >> bw) || (ls >> extra)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed trace line: '" + line + "'");
    }
    if (!std::isfinite(bw) || bw <= 0.0) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": non-positive bandwidth");
    }
    if (!trace.timestamps_s.empty() && !(t > trace.timestamps_s.back())) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": non-monotonic timestamps");
    }
    trace.timestamps_s.push_back(t);
    trace.bandwidths_mbps.push_back(bw);
  }
  validate_trace(trace);
  return trace;
}

inline void write_trace(const std::filesystem::path& path,
                        const NetworkTrace& trace) {
  validate_trace(trace);
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write trace file: " + path.string());
  }
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << format_exact(trace.timestamps_s[i]) << ' '
        << format_exact(trace.bandwidths_mbps[i]) << '\n';
  }
  if (!out) {
    throw std::runtime_error("short write to trace file: " + path.string());
  }
}

// Loads every `*.trace` file in a directory, sorted by file name.
inline std::vector<NetworkTrace> load_trace_dir(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("not a trace directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".trace") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  std::vector<NetworkTrace> traces;
  traces.reserve(files.size());
  for (const auto& f : files) traces.push_back(load_trace(f));
  if (traces.empty()) {
    throw std::runtime_error("no *.trace files in " + dir.string());
  }
  return traces;
}

// Bounded mean-reverting random walk, one sample per second, bandwidths
// clamped to [0.1, 10 * mean].  Bit-reproducible for a given seed.
inline std::vector<NetworkTrace> generate_synthetic(
    const SyntheticTraceSpec& spec) {
  if (!(spec.duration_s > 0.0)) {
    throw std::invalid_argument("synthetic duration must be > 0");
  }
  if (!(spec.mean_bandwidth_mbps > 0.0)) {
    throw std::invalid_argument("synthetic mean bandwidth must be > 0");
  }
  if (spec.volatility < 0.0) {
    throw std::invalid_argument("synthetic volatility must be >= 0");
  }
  constexpr double kReversion = 0.15;
  const double lo = 0.1;
  const double hi = 10.0 * spec.mean_bandwidth_mbps;
  const auto samples = static_cast<std::size_t>(std::floor(spec.duration_s)) + 1;

  std::vector<NetworkTrace> traces;
  traces.reserve(spec.num_traces);
  for (std::size_t k = 0; k < spec.num_traces; ++k) {
    Rng rng(derive_seed(spec.seed, /*tag=*/0x7261636bULL, k));
    NetworkTrace trace;
    char name[48];
    std::snprintf(name, sizeof(name), "synth_s%llu_%04zu",
                  static_cast<unsigned long long>(spec.seed), k);
    trace.id = name;
    trace.timestamps_s.resize(samples);
    trace.bandwidths_mbps.resize(samples);
    double bw = spec.mean_bandwidth_mbps;
    for (std::size_t i = 0; i < samples; ++i) {
      trace.timestamps_s[i] = static_cast<double>(i);
      trace.bandwidths_mbps[i] = bw;
      const double kick = spec.volatility * spec.mean_bandwidth_mbps *
                          uniform_range(rng, -1.0, 1.0);
      bw += kReversion * (spec.mean_bandwidth_mbps - bw) + kick;
      bw = std::clamp(bw, lo, hi);
    }
    validate_trace(trace);
    traces.push_back(std::move(trace));
  }
  return traces;
}

// Channel rate at time t under zero-order-hold interpolation, scaled by the
// loss survival factor (1 - p).  t must lie within the trace's time span.
inline double effective_throughput(const NetworkTrace& trace, double t,
                                   const LossModel& loss) {
  validate_loss(loss);
  if (!(t >= trace.first_timestamp() && t <= trace.last_timestamp())) {
    throw std::out_of_range("time " + std::to_string(t) +
                            " outside trace '" + trace.id + "' span [" +
                            std::to_string(trace.first_timestamp()) + ", " +
                            std::to_string(trace.last_timestamp()) + "]");
  }
  auto it = std::upper_bound(trace.timestamps_s.begin(),
                             trace.timestamps_s.end(), t);
  const auto idx = static_cast<std::size_t>(it - trace.timestamps_s.begin()) - 1;
  return trace.bandwidths_mbps[idx] * (1.0 - loss.loss_probability);
}

}  // namespace abr
