#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "abr/common.hpp"
#include "abr/env.hpp"

namespace abr {

// Row-major dense matrix, rows = output units, cols = input units.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct Layer {
  Matrix weights;
  std::vector<double> biases;
};

// Parameter container for one MLP: hidden layers use ReLU, the final layer
// is linear.  The softmax head for policies is applied by the caller.
struct ParamSet {
  std::vector<Layer> layers;
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
};

// Gradients are shape-congruent with their ParamSet.
using Gradients = ParamSet;

inline ParamSet make_mlp(const std::vector<std::size_t>& sizes,
                         std::uint64_t seed) {
  if (sizes.size() < 2) {
    throw std::invalid_argument("MLP needs at least input and output sizes");
  }
  ParamSet p;
  p.layer_sizes = sizes;
  Rng rng(derive_seed(seed, /*tag=*/0x6d6c70ULL));
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    Layer layer;
    layer.weights = Matrix(sizes[k + 1], sizes[k]);
    layer.biases.assign(sizes[k + 1], 0.0);
    const double r = std::sqrt(6.0 / static_cast<double>(sizes[k] + sizes[k + 1]));
    for (double& w : layer.weights.data) w = uniform_range(rng, -r, r);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline ParamSet make_zero_mlp(const std::vector<std::size_t>& sizes) {
  ParamSet p = make_mlp(sizes, 0);
  for (auto& layer : p.layers) {
    std::fill(layer.weights.data.begin(), layer.weights.data.end(), 0.0);
  }
  return p;
}

inline Gradients make_zero_like(const ParamSet& p) {
  Gradients g;
  g.layer_sizes = p.layer_sizes;
  for (const auto& layer : p.layers) {
    Layer zl;
    zl.weights = Matrix(layer.weights.rows, layer.weights.cols);
    zl.biases.assign(layer.biases.size(), 0.0);
    g.layers.push_back(std::move(zl));
  }
  return g;
}

inline bool same_shape(const ParamSet& a, const ParamSet& b) {
  if (a.layer_sizes != b.layer_sizes || a.layers.size() != b.layers.size()) {
    return false;
  }
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (a.layers[k].weights.rows != b.layers[k].weights.rows ||
        a.layers[k].weights.cols != b.layers[k].weights.cols ||
        a.layers[k].biases.size() != b.layers[k].biases.size()) {
      return false;
    }
  }
  return true;
}

// activations[0] is the input; activations[k] for k >= 1 is the output of
// layer k-1 after its ReLU (raw for the final layer).
struct ForwardCache {
  std::vector<std::vector<double>> activations;
};

inline std::vector<double> forward(const ParamSet& p,
                                   std::span<const double> input,
                                   ForwardCache* cache = nullptr) {
  if (input.size() != p.input_dim()) {
    throw std::invalid_argument("forward(): input dim " +
                                std::to_string(input.size()) + " != " +
                                std::to_string(p.input_dim()));
  }
  std::vector<double> a(input.begin(), input.end());
  if (cache != nullptr) {
    cache->activations.clear();
    cache->activations.push_back(a);
  }
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const Layer& layer = p.layers[k];
    std::vector<double> z(layer.weights.rows);
    for (std::size_t i = 0; i < layer.weights.rows; ++i) {
      double acc = layer.biases[i];
      const double* wrow = &layer.weights.data[i * layer.weights.cols];
      for (std::size_t j = 0; j < layer.weights.cols; ++j) acc += wrow[j] * a[j];
      z[i] = acc;
    }
    const bool last = (k + 1 == p.layers.size());
    if (!last) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    a = std::move(z);
    if (cache != nullptr) cache->activations.push_back(a);
  }
  return a;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Action distribution over the bitrate ladder.
inline std::vector<double> policy_forward(const ParamSet& actor,
                                          const StreamState& state,
                                          ForwardCache* cache = nullptr) {
  const auto x = flatten_state(state);
  return softmax(forward(actor, x, cache));
}

// Scalar state value.
inline double critic_forward(const ParamSet& critic, const StreamState& state,
                             ForwardCache* cache = nullptr) {
  if (critic.output_dim() != 1) {
    throw std::invalid_argument("critic network must have one output");
  }
  const auto x = flatten_state(state);
  return forward(critic, x, cache)[0];
}

// Backpropagates dl_dout (gradient w.r.t. the raw network output) through
// the cached forward pass and accumulates parameter gradients into `grads`.
inline void backward_accumulate(const ParamSet& p, const ForwardCache& cache,
                                std::span<const double> dl_dout,
                                Gradients& grads) {
  if (dl_dout.size() != p.output_dim()) {
    throw std::invalid_argument("backward(): upstream gradient dim mismatch");
  }
  if (cache.activations.size() != p.layers.size() + 1) {
    throw std::invalid_argument("backward(): stale forward cache");
  }
  std::vector<double> delta(dl_dout.begin(), dl_dout.end());
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    const Layer& layer = p.layers[k];
    const auto& in = cache.activations[k];
    Layer& g = grads.layers[k];
    for (std::size_t i = 0; i < layer.weights.rows; ++i) {
      g.biases[i] += delta[i];
      double* grow = &g.weights.data[i * layer.weights.cols];
      for (std::size_t j = 0; j < layer.weights.cols; ++j) {
        grow[j] += delta[i] * in[j];
      }
    }
    if (k == 0) break;
    std::vector<double> prev(layer.weights.cols, 0.0);
    for (std::size_t i = 0; i < layer.weights.rows; ++i) {
      const double d = delta[i];
      const double* wrow = &layer.weights.data[i * layer.weights.cols];
      for (std::size_t j = 0; j < layer.weights.cols; ++j) {
        prev[j] += d * wrow[j];
      }
    }
    // ReLU derivative from the post-activation sign.
    for (std::size_t j = 0; j < prev.size(); ++j) {
      if (!(cache.activations[k][j] > 0.0)) prev[j] = 0.0;
    }
    delta = std::move(prev);
  }
}

inline Gradients backward(const ParamSet& p, const ForwardCache& cache,
                          std::span<const double> dl_dout) {
  Gradients g = make_zero_like(p);
  backward_accumulate(p, cache, dl_dout, g);
  return g;
}

inline bool all_finite(const ParamSet& p) {
  for (const auto& layer : p.layers) {
    for (double v : layer.weights.data) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : layer.biases) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

// params <- params + rate * grads.  Ascent objectives pass a positive rate,
// descent losses a negative one.  Non-finite gradients reject the update.
inline void apply_update(ParamSet& params, const Gradients& grads,
                         double rate) {
  if (!same_shape(params, grads)) {
    throw std::invalid_argument("apply_update(): shape mismatch");
  }
  if (!all_finite(grads)) {
    throw std::runtime_error("apply_update(): non-finite gradient rejected");
  }
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& pl = params.layers[k];
    const auto& gl = grads.layers[k];
    for (std::size_t i = 0; i < pl.weights.data.size(); ++i) {
      pl.weights.data[i] += rate * gl.weights.data[i];
    }
    for (std::size_t i = 0; i < pl.biases.size(); ++i) {
      pl.biases[i] += rate * gl.biases[i];
    }
  }
}

inline void scale_gradients(Gradients& g, double factor) {
  for (auto& layer : g.layers) {
    for (double& v : layer.weights.data) v *= factor;
    for (double& v : layer.biases) v *= factor;
  }
}

// ---------------------------------------------------------------------------
// Optimizers.  step() moves params by rate * (preconditioned) gradient, so
// ascent objectives pass a positive rate and descent losses a negative one.
// ---------------------------------------------------------------------------

enum class OptimizerKind { kSgd, kRmsProp };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "rmsprop";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "rmsprop") return OptimizerKind::kRmsProp;
  throw std::invalid_argument("unknown optimizer: '" + s + "'");
}

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParamSet& params, const Gradients& grads, double rate) = 0;
};

class SgdOptimizer final : public Optimizer {
 public:
  void step(ParamSet& params, const Gradients& grads, double rate) override {
    apply_update(params, grads, rate);
  }
};

// Per-parameter running mean of squared gradients; tames the heavy-tailed
// advantage spikes that plain SGD turns into policy collapses.
class RmsPropOptimizer final : public Optimizer {
 public:
  explicit RmsPropOptimizer(double decay = 0.99, double epsilon = 1e-6)
      : decay_(decay), epsilon_(epsilon) {}

  void step(ParamSet& params, const Gradients& grads, double rate) override {
    if (!same_shape(params, grads)) {
      throw std::invalid_argument("optimizer step: shape mismatch");
    }
    if (!all_finite(grads)) {
      throw std::runtime_error("optimizer step: non-finite gradient rejected");
    }
    if (cache_.layers.empty()) cache_ = make_zero_like(params);
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
      auto& pw = params.layers[k].weights.data;
      auto& pb = params.layers[k].biases;
      const auto& gw = grads.layers[k].weights.data;
      const auto& gb = grads.layers[k].biases;
      auto& cw = cache_.layers[k].weights.data;
      auto& cb = cache_.layers[k].biases;
      for (std::size_t i = 0; i < pw.size(); ++i) {
        cw[i] = decay_ * cw[i] + (1.0 - decay_) * gw[i] * gw[i];
        pw[i] += rate * gw[i] / (std::sqrt(cw[i]) + epsilon_);
      }
      for (std::size_t i = 0; i < pb.size(); ++i) {
        cb[i] = decay_ * cb[i] + (1.0 - decay_) * gb[i] * gb[i];
        pb[i] += rate * gb[i] / (std::sqrt(cb[i]) + epsilon_);
      }
    }
  }

 private:
  double decay_;
  double epsilon_;
  Gradients cache_;
};

inline std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind) {
  if (kind == OptimizerKind::kRmsProp) {
    return std::make_unique<RmsPropOptimizer>();
  }
  return std::make_unique<SgdOptimizer>();
}

inline double gradient_norm(const Gradients& g) {
  double sq = 0.0;
  for (const auto& layer : g.layers) {
    for (double v : layer.weights.data) sq += v * v;
    for (double v : layer.biases) sq += v * v;
  }
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned text files holding the actor and critic parameter
// sets.  Values are written with 17 significant digits so a save/load round
// trip reproduces every double exactly.
//
//   abr-vtrace-ckpt v1
//   actor <n0> <n1> ... <nk>
//   <weights row-major, then biases, one line per layer>
//   critic <m0> <m1> ... <mk>
//   ...
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointMagic = "abr-vtrace-ckpt v1";

inline void write_params(std::ostream& out, const char* name,
                         const ParamSet& p) {
  out << name;
  for (std::size_t s : p.layer_sizes) out << ' ' << s;
  out << '\n';
  for (const auto& layer : p.layers) {
    bool first = true;
    for (double v : layer.weights.data) {
      out << (first ? "" : " ") << format_exact(v);
      first = false;
    }
    for (double v : layer.biases) {
      out << (first ? "" : " ") << format_exact(v);
      first = false;
    }
    out << '\n';
  }
}

inline ParamSet read_params(std::istream& in, const char* name) {
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error("checkpoint truncated before '" +
                             std::string(name) + "' section");
  }
  std::istringstream hs(header);
  std::string label;
  hs >> label;
  if (label != name) {
    throw std::runtime_error("checkpoint: expected section '" +
                             std::string(name) + "', got '" + label + "'");
  }
  std::vector<std::size_t> sizes;
  std::size_t s = 0;
  while (hs >> s) sizes.push_back(s);
  if (sizes.size() < 2) {
    throw std::runtime_error("checkpoint: bad layer dimensions");
  }
  ParamSet p = make_zero_mlp(sizes);
  for (auto& layer : p.layers) {
    for (double& v : layer.weights.data) {
      if (!(in >> v)) throw std::runtime_error("checkpoint: missing weights");
    }
    for (double& v : layer.biases) {
      if (!(in >> v)) throw std::runtime_error("checkpoint: missing biases");
    }
  }
  in >> std::ws;
  return p;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const ParamSet& actor, const ParamSet& critic) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint: " + path.string());
  }
  out << kCheckpointMagic << '\n';
  write_params(out, "actor", actor);
  write_params(out, "critic", critic);
  if (!out) {
    throw std::runtime_error("short write to checkpoint: " + path.string());
  }
}

struct Checkpoint {
  ParamSet actor;
  ParamSet critic;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + path.string());
  }
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) {
    throw std::runtime_error("not a checkpoint file (bad magic): " +
                             path.string());
  }
  Checkpoint ckpt;
  ckpt.actor = read_params(in, "actor");
  ckpt.critic = read_params(in, "critic");
  return ckpt;
}

}  // namespace abr
