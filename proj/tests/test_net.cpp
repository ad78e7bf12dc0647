#include <catch_amalgamated.hpp>

#include <filesystem>

#include "abr/net.hpp"
#include "test_util.hpp"

using namespace abr;
using abrtest::finite_difference;
using abrtest::max_relative_error;
using abrtest::random_state;

namespace {
constexpr std::size_t kLevels = 4;
const std::vector<std::size_t> kActorSizes = {state_dim(kLevels), 8, kLevels};
const std::vector<std::size_t> kCriticSizes = {state_dim(kLevels), 8, 1};
}  // namespace

TEST_CASE("zero-initialized policy is uniform", "[net]") {
  const ParamSet actor = make_zero_mlp(kActorSizes);
  Rng rng(2);
  const auto probs = policy_forward(actor, random_state(rng, kLevels));
  for (double p : probs) {
    CHECK_THAT(p, Catch::Matchers::WithinAbs(1.0 / kLevels, 1e-15));
  }
}

TEST_CASE("policy outputs form a distribution", "[net]") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const ParamSet actor = make_mlp(kActorSizes, rng());
    const auto probs = policy_forward(actor, random_state(rng, kLevels));
    double sum = 0.0;
    for (double p : probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("raising an output bias raises that action's probability", "[net]") {
  Rng rng(5);
  ParamSet actor = make_mlp(kActorSizes, 40);
  const StreamState s = random_state(rng, kLevels);
  const auto before = policy_forward(actor, s);
  actor.layers.back().biases[2] += 0.5;
  const auto after = policy_forward(actor, s);
  CHECK(after[2] > before[2]);
}

TEST_CASE("zero critic outputs zero and forwards are pure", "[net]") {
  const ParamSet critic = make_zero_mlp(kCriticSizes);
  Rng rng(7);
  const StreamState s = random_state(rng, kLevels);
  CHECK(critic_forward(critic, s) == 0.0);

  const ParamSet c2 = make_mlp(kCriticSizes, 99);
  CHECK(critic_forward(c2, s) == critic_forward(c2, s));
}

TEST_CASE("final linear layer scales the critic output", "[net]") {
  Rng rng(11);
  ParamSet critic = make_mlp(kCriticSizes, 123);
  const StreamState s = random_state(rng, kLevels);
  const double base = critic_forward(critic, s);
  for (double& w : critic.layers.back().weights.data) w *= 2.0;
  for (double& b : critic.layers.back().biases) b *= 2.0;
  CHECK_THAT(critic_forward(critic, s),
             Catch::Matchers::WithinRel(2.0 * base, 1e-12));
}

TEST_CASE("dimension mismatches are rejected", "[net]") {
  const ParamSet actor = make_mlp(kActorSizes, 1);
  std::vector<double> wrong(3, 0.0);
  REQUIRE_THROWS_AS(forward(actor, wrong), std::invalid_argument);
  REQUIRE_THROWS_AS(make_mlp({5}, 1), std::invalid_argument);

  Rng rng(1);
  const ParamSet critic = make_mlp({state_dim(kLevels), 8, 2}, 1);
  REQUIRE_THROWS_AS(critic_forward(critic, random_state(rng, kLevels)),
                    std::invalid_argument);
}

TEST_CASE("zero upstream gradient yields zero gradients", "[net]") {
  Rng rng(13);
  const ParamSet actor = make_mlp(kActorSizes, 77);
  ForwardCache cache;
  const StreamState s = random_state(rng, kLevels);
  forward(actor, flatten_state(s), &cache);
  const std::vector<double> zero(kLevels, 0.0);
  const Gradients g = backward(actor, cache, zero);
  CHECK(gradient_norm(g) == 0.0);
}

TEST_CASE("softmax log-prob gradient at uniform output", "[net]") {
  const ParamSet actor = make_zero_mlp(kActorSizes);
  Rng rng(17);
  const StreamState s = random_state(rng, kLevels);
  ForwardCache cache;
  const auto probs = policy_forward(actor, s, &cache);
  const std::size_t a = 2;
  std::vector<double> dlogits(kLevels);
  for (std::size_t k = 0; k < kLevels; ++k) {
    dlogits[k] = (k == a ? 1.0 : 0.0) - probs[k];
  }
  const Gradients g = backward(actor, cache, dlogits);
  for (std::size_t k = 0; k < kLevels; ++k) {
    const double expected = (k == a ? 1.0 : 0.0) - 1.0 / kLevels;
    CHECK_THAT(g.layers.back().biases[k],
               Catch::Matchers::WithinAbs(expected, 1e-15));
  }
}

TEST_CASE("backward matches finite differences on random nets", "[net]") {
  Rng rng(19);
  double worst = 0.0;
  for (int rep = 0; rep < 25; ++rep) {
    const ParamSet net = make_mlp({6, 7, 5, 3}, rng());
    std::vector<double> input(6);
    for (auto& v : input) v = uniform_range(rng, -1.5, 1.5);
    std::vector<double> mix(3);
    for (auto& v : mix) v = uniform_range(rng, -1.0, 1.0);

    // loss = sum_i mix_i y_i + 0.5 sum_i y_i^2, so dl/dy = mix + y
    const auto loss = [&](const ParamSet& p) {
      const auto y = forward(p, input);
      double l = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        l += mix[i] * y[i] + 0.5 * y[i] * y[i];
      }
      return l;
    };

    ForwardCache cache;
    const auto y = forward(net, input, &cache);
    std::vector<double> dl_dy(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) dl_dy[i] = mix[i] + y[i];
    const Gradients analytic = backward(net, cache, dl_dy);
    const Gradients fd = finite_difference(net, loss);
    worst = std::max(worst, max_relative_error(analytic, fd));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("apply_update arithmetic and error contract", "[net]") {
  ParamSet p = make_zero_mlp({1, 1});
  p.layers[0].weights.data[0] = 1.0;
  Gradients g = make_zero_like(p);
  g.layers[0].weights.data[0] = 2.0;

  ParamSet before = p;
  apply_update(p, g, 0.0);
  CHECK(p.layers[0].weights.data[0] == before.layers[0].weights.data[0]);

  apply_update(p, g, 0.1);
  CHECK_THAT(p.layers[0].weights.data[0],
             Catch::Matchers::WithinRel(1.2, 1e-15));

  g.layers[0].weights.data[0] = std::nan("");
  REQUIRE_THROWS_AS(apply_update(p, g, 0.1), std::runtime_error);
  CHECK_THAT(p.layers[0].weights.data[0],
             Catch::Matchers::WithinRel(1.2, 1e-15));  // untouched

  const ParamSet other = make_zero_mlp({2, 2});
  const Gradients g2 = make_zero_like(other);
  REQUIRE_THROWS_AS(apply_update(p, g2, 0.1), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is value-exact", "[net]") {
  Rng rng(23);
  const ParamSet actor = make_mlp(kActorSizes, rng());
  const ParamSet critic = make_mlp(kCriticSizes, rng());
  const auto path =
      std::filesystem::temp_directory_path() / "abr_ckpt_test.ckpt";
  save_checkpoint(path, actor, critic);
  const Checkpoint back = load_checkpoint(path);
  REQUIRE(back.actor.layer_sizes == actor.layer_sizes);
  REQUIRE(back.critic.layer_sizes == critic.layer_sizes);
  for (std::size_t k = 0; k < actor.layers.size(); ++k) {
    CHECK(back.actor.layers[k].weights.data == actor.layers[k].weights.data);
    CHECK(back.actor.layers[k].biases == actor.layers[k].biases);
    CHECK(back.critic.layers[k].weights.data == critic.layers[k].weights.data);
    CHECK(back.critic.layers[k].biases == critic.layers[k].biases);
  }
}

TEST_CASE("checkpoint loader rejects foreign files", "[net]") {
  const auto path =
      std::filesystem::temp_directory_path() / "abr_ckpt_bad.ckpt";
  std::ofstream(path) << "not a checkpoint\n1 2 3\n";
  REQUIRE_THROWS_WITH(load_checkpoint(path),
                      Catch::Matchers::ContainsSubstring("magic"));
  REQUIRE_THROWS(load_checkpoint(path.string() + ".missing"));
}

TEST_CASE("initialization is seeded and reproducible", "[net]") {
  const ParamSet a = make_mlp(kActorSizes, 321);
  const ParamSet b = make_mlp(kActorSizes, 321);
  const ParamSet c = make_mlp(kActorSizes, 322);
  CHECK(a.layers[0].weights.data == b.layers[0].weights.data);
  CHECK(a.layers[0].weights.data != c.layers[0].weights.data);
  // glorot-style range
  const double r = std::sqrt(6.0 / (kActorSizes[0] + kActorSizes[1]));
  for (double w : a.layers[0].weights.data) {
    CHECK(std::abs(w) <= r);
  }
  for (double bias : a.layers[0].biases) CHECK(bias == 0.0);
}
