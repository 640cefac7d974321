#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "merl/env/registry.hpp"
#include "merl/rollout.hpp"
#include "merl/vex.hpp"
#include "oracles.hpp"

using namespace merl;

namespace {

RolloutBatch random_flag_batch(Rng& rng, int n, double p_terminal, double p_truncated) {
  RolloutBatch b;
  b.num_actors = 1;
  b.horizon = n;
  b.obs_dim = 1;
  const std::size_t un = static_cast<std::size_t>(n);
  b.rewards.resize(un);
  b.values.resize(un);
  b.next_values.resize(un);
  b.terminal.assign(un, 0);
  b.truncated.assign(un, 0);
  for (std::size_t i = 0; i < un; ++i) {
    b.rewards[i] = rng.normal() * 2.0;
    b.values[i] = rng.normal();
    const double u = rng.uniform();
    if (u < p_terminal)
      b.terminal[i] = 1;
    else if (u < p_terminal + p_truncated)
      b.truncated[i] = 1;
    b.next_values[i] = b.terminal[i] ? 0.0 : rng.normal();
  }
  return b;
}

std::vector<unsigned char> episode_ends(const RolloutBatch& b) {
  std::vector<unsigned char> e(b.terminal.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = (b.terminal[i] || b.truncated[i]) ? 1 : 0;
  return e;
}

AgentParams agent_for(const env::Env& e, std::uint64_t seed, int hidden = 8) {
  return make_agent(e.observation_spec(), e.action_spec(), Arch::Separate, seed, hidden, 2);
}

}  // namespace

TEST_CASE("gae: lambda = 0 reduces to the one-step TD residual") {
  Rng rng(1);
  auto b = random_flag_batch(rng, 12, 0.15, 0.1);
  compute_gae(b, 0.99, 0.0);
  for (int t = 0; t < 12; ++t) {
    const std::size_t i = static_cast<std::size_t>(t);
    const double bootstrap = b.terminal[i] ? 0.0 : b.next_values[i];
    const double delta = b.rewards[i] + 0.99 * bootstrap - b.values[i];
    CHECK(b.advantages[i] == doctest::Approx(delta).epsilon(1e-15));
  }
}

TEST_CASE("gae: lambda = 1 on a terminal episode is discounted reward-to-go minus value") {
  RolloutBatch b;
  b.num_actors = 1;
  b.horizon = 5;
  b.obs_dim = 1;
  b.rewards = {1.0, 2.0, -1.0, 0.5, 3.0};
  b.values = {0.3, -0.2, 0.7, 0.1, -0.5};
  // inside an episode the recorded next value chains with values[t+1]
  b.next_values = {-0.2, 0.7, 0.1, -0.5, 0.0};
  b.terminal = {0, 0, 0, 0, 1};
  b.truncated = {0, 0, 0, 0, 0};
  const double gamma = 0.9;
  compute_gae(b, gamma, 1.0);
  for (int t = 0; t < 5; ++t) {
    double rtg = 0.0, w = 1.0;
    for (int l = t; l < 5; ++l) {
      rtg += w * b.rewards[static_cast<std::size_t>(l)];
      w *= gamma;
    }
    CHECK(b.advantages[static_cast<std::size_t>(t)] ==
          doctest::Approx(rtg - b.values[static_cast<std::size_t>(t)]).epsilon(1e-12));
  }
}

TEST_CASE("gae: matches the brute-force double sum on random instances") {
  Rng rng(20);
  for (double lambda : {0.0, 0.5, 0.95, 1.0}) {
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + static_cast<int>(rng.below(19));
      auto b = random_flag_batch(rng, n, 0.2, 0.1);
      const double gamma = rng.uniform(0.9, 0.999);
      compute_gae(b, gamma, lambda);
      const auto want = oracles::gae_double_sum(b.rewards, b.values, b.next_values, b.terminal,
                                                episode_ends(b), gamma, lambda);
      for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(std::abs(b.advantages[i] - want[i]) <= 1e-10);
    }
  }
}

TEST_CASE("gae: segmented fixture resets across the boundary") {
  RolloutBatch b;
  b.num_actors = 1;
  b.horizon = 4;
  b.obs_dim = 1;
  b.rewards = {1.0, 1.0, 1.0, 1.0};
  b.values = {0.0, 0.0, 0.0, 0.0};
  b.next_values = {0.0, 0.0, 0.0, 5.0};  // only the horizon tail bootstraps
  b.terminal = {0, 1, 0, 0};  // episode ends at t=1
  b.truncated = {0, 0, 0, 0};
  compute_gae(b, 1.0, 1.0);
  // second episode [2,3] must not leak into the first
  CHECK(b.advantages[1] == doctest::Approx(1.0));           // r - V, no bootstrap
  CHECK(b.advantages[0] == doctest::Approx(2.0));           // 1 + A_1
  CHECK(b.advantages[3] == doctest::Approx(6.0));           // 1 + 5 bootstrap
  CHECK(b.advantages[2] == doctest::Approx(1.0 + 6.0));     // within second episode only
}

TEST_CASE("returns: identity R = A + V and the zero-advantage case") {
  Rng rng(3);
  auto b = random_flag_batch(rng, 16, 0.1, 0.1);
  compute_gae(b, 0.99, 0.95);
  compute_returns(b);
  for (std::size_t i = 0; i < b.returns.size(); ++i)
    CHECK(b.returns[i] - b.values[i] == doctest::Approx(b.advantages[i]).epsilon(1e-15));

  std::fill(b.advantages.begin(), b.advantages.end(), 0.0);
  compute_returns(b);
  for (std::size_t i = 0; i < b.returns.size(); ++i) CHECK(b.returns[i] == b.values[i]);
}

TEST_CASE("advantage normalization: mean 0 and unit variance within 1e-9") {
  Rng rng(9);
  auto b = random_flag_batch(rng, 64, 0.1, 0.05);
  compute_gae(b, 0.99, 0.95);
  normalize_advantages(b, true);
  const double m = mean_of(b.policy_advantages);
  double var = 0.0;
  for (double a : b.policy_advantages) var += (a - m) * (a - m);
  var /= static_cast<double>(b.policy_advantages.size());
  CHECK(std::abs(m) < 1e-9);
  CHECK(std::abs(var - 1.0) < 1e-9);

  normalize_advantages(b, false);
  CHECK(b.policy_advantages == b.advantages);
}

TEST_CASE("collect: exact transition count and bootstrapped tail") {
  auto factory = env::env_factory("point_mass");
  RolloutCollector col(factory, 1, 7);
  auto e = env::make_env("point_mass");
  const AgentParams params = agent_for(*e, 11);
  const auto b = col.collect(params, 4);
  CHECK(b.size() == 4);
  CHECK(b.num_actors == 1);
  for (int i = 0; i < 4; ++i) {
    CHECK(!b.terminal[static_cast<std::size_t>(i)]);
    CHECK(!b.truncated[static_cast<std::size_t>(i)]);
  }
  const auto segs = segment_rollout(b);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].bootstrapped);
  // horizon tail bootstraps from the recorded next value
  CHECK(b.next_values[3] != 0.0);
}

TEST_CASE("collect: multiple actors in fixed order, num_actors * T transitions") {
  auto factory = env::env_factory("grid_rooms_a");
  RolloutCollector col(factory, 3, 21);
  auto e = env::make_env("grid_rooms_a");
  const AgentParams params = agent_for(*e, 5);
  const auto b = col.collect(params, 6);
  CHECK(b.size() == 18);
  CHECK(b.num_actors == 3);
  CHECK(b.index(1, 0) == 6);
}

TEST_CASE("collect: same seeds twice give bit-identical batches") {
  auto e = env::make_env("point_mass");
  const AgentParams params = agent_for(*e, 33);
  auto factory = env::env_factory("point_mass");

  RolloutCollector c1(factory, 2, 99);
  RolloutCollector c2(factory, 2, 99);
  const auto b1 = c1.collect(params, 32);
  const auto b2 = c2.collect(params, 32);

  CHECK(b1.rewards == b2.rewards);
  CHECK(b1.old_log_probs == b2.old_log_probs);
  CHECK(b1.values == b2.values);
  CHECK(b1.next_values == b2.next_values);
  for (int i = 0; i < b1.size(); ++i) {
    CHECK(b1.obs[static_cast<std::size_t>(i)] == b2.obs[static_cast<std::size_t>(i)]);
    CHECK(b1.actions[static_cast<std::size_t>(i)].continuous ==
          b2.actions[static_cast<std::size_t>(i)].continuous);
  }
}

TEST_CASE("collect: near-deterministic policy reproduces a pure env simulation of mean actions") {
  auto e = env::make_env("point_mass");
  AgentParams params = agent_for(*e, 17);
  std::fill(params.log_std.begin(), params.log_std.end(), -20.0);  // std ~ 2e-9

  auto factory = env::env_factory("point_mass");
  RolloutCollector col(factory, 1, 55);
  const auto b = col.collect(params, 20);

  // independent simulation: step a fresh env with the policy mean actions
  auto sim = env::make_env("point_mass");
  Vec obs = sim->reset(Rng::mix(Rng::mix(55, 0x2000), 0));
  for (int t = 0; t < 20; ++t) {
    CHECK(norm2(b.obs[static_cast<std::size_t>(t)]) ==
          doctest::Approx(norm2(obs)).epsilon(1e-6));
    const auto d = policy_distribution(params, obs);
    env::Action a;
    a.continuous = d.mean;
    const auto sr = sim->step(a);
    CHECK(b.rewards[static_cast<std::size_t>(t)] ==
          doctest::Approx(sr.reward).epsilon(1e-6));
    obs = sr.observation;
  }
}

TEST_CASE("collect: episode bookkeeping across rollout boundaries") {
  auto factory = env::env_factory("grid_rooms_b");
  RolloutCollector col(factory, 1, 3);
  auto e = env::make_env("grid_rooms_b");
  const AgentParams params = agent_for(*e, 2);
  // grid rooms truncates at 100 steps; 3 rollouts of 80 cross a boundary
  for (int k = 0; k < 3; ++k) col.collect(params, 80);
  CHECK(col.episode_returns().size() >= 2);  // at least two completed episodes
}

TEST_CASE("collector: env switch requires compatible specs") {
  auto factory_a = env::env_factory("grid_rooms_a");
  RolloutCollector col(factory_a, 1, 1);
  CHECK_THROWS_AS(col.switch_env(env::env_factory("point_mass")), ConfigError);
  col.switch_env(env::env_factory("grid_rooms_b"));  // compatible pair is fine
}
