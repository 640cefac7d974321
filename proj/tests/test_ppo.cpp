#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "merl/env/registry.hpp"
#include "merl/gradcheck.hpp"
#include "merl/ppo.hpp"
#include "oracles.hpp"

using namespace merl;

namespace {

struct Setup {
  AgentParams params;
  AgentOptimizers opt;
  RolloutBatch batch;
  PreparedTargets prep;
  HyperParams hp;
  FeatureFlags ff;
};

Setup make_setup(const char* env_id, std::uint64_t seed, int horizon, int minibatch,
                 int epochs, int hidden = 8) {
  Setup s;
  auto e = env::make_env(env_id);
  s.params = make_agent(e->observation_spec(), e->action_spec(), Arch::Separate, seed, hidden, 2);
  s.opt = make_optimizers(s.params);
  s.hp.horizon = horizon;
  s.hp.minibatch_size = minibatch;
  s.hp.epochs = epochs;
  RolloutCollector col(env::env_factory(env_id), 1, seed + 1);
  s.batch = col.collect(s.params, horizon);
  s.prep = prepare_batch(s.batch, s.hp, s.ff);
  return s;
}

std::vector<int> all_indices(const RolloutBatch& b) {
  std::vector<int> idx(static_cast<std::size_t>(b.size()));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Vec flatten_params(const AgentParams& p) {
  Vec out;
  auto push = [&out](const Mlp& net) {
    for_each_param(net, [&out](const double& x) { out.push_back(x); });
  };
  if (p.arch == Arch::Separate) push(p.policy);
  else push(p.policy_head);
  push(p.trunk);
  push(p.value_head);
  push(p.ve_head);
  push(p.fs_head);
  for (double x : p.log_std) out.push_back(x);
  return out;
}

// shared-subset comparison for the reduction test: everything except the
// auxiliary heads
Vec flatten_core_params(const AgentParams& p) {
  Vec out;
  auto push = [&out](const Mlp& net) {
    for_each_param(net, [&out](const double& x) { out.push_back(x); });
  };
  if (p.arch == Arch::Separate) push(p.policy);
  else push(p.policy_head);
  push(p.trunk);
  push(p.value_head);
  for (double x : p.log_std) out.push_back(x);
  return out;
}

}  // namespace

TEST_CASE("clip_g: direct values") {
  CHECK(clip_g(0.2, 2.0) == doctest::Approx(2.4).epsilon(1e-15));
  CHECK(clip_g(0.2, -1.0) == doctest::Approx(-0.8).epsilon(1e-15));
  CHECK(clip_g(0.17, 0.0) == 0.0);
  CHECK(clip_g(0.5, 0.0) == 0.0);
}

TEST_CASE("anchor point: at theta = theta_old the objective is the mean advantage") {
  Setup s = make_setup("point_mass", 3, 64, 32, 1);
  const auto idx = all_indices(s.batch);
  const auto obj = ppo_policy_objective(s.batch, s.params, idx, 0.2);

  CHECK(obj.ratio_mean == 1.0);
  CHECK(obj.ratio_max == 1.0);
  CHECK(obj.clip_fraction == 0.0);
  const double mean_adv = mean_of(s.batch.policy_advantages);
  CHECK(std::abs(obj.value - mean_adv) <= 1e-12);
}

TEST_CASE("objective matches an elementwise oracle away from theta_old") {
  Setup s = make_setup("point_mass", 5, 32, 32, 1);
  // different parameters than the collection snapshot -> ratios != 1
  auto e = env::make_env("point_mass");
  const AgentParams other =
      make_agent(e->observation_spec(), e->action_spec(), Arch::Separate, 777, 8, 2);

  const auto idx = all_indices(s.batch);
  const auto obj = ppo_policy_objective(s.batch, other, idx, 0.2);

  double want = 0.0;
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const double lp = log_prob(policy_distribution(other, s.batch.obs[ui]), s.batch.actions[ui]);
    want += oracles::ppo_term(lp, s.batch.old_log_probs[ui], s.batch.policy_advantages[ui], 0.2);
  }
  want /= static_cast<double>(idx.size());
  CHECK(std::abs(obj.value - want) <= 1e-12);
}

TEST_CASE("clipped regime: objective is flat and the update leaves the policy untouched") {
  Setup s = make_setup("point_mass", 11, 16, 16, 1);

  // push every sample strictly into its clipped region
  for (int i = 0; i < s.batch.size(); ++i) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const double lp = s.batch.old_log_probs[ui];
    if (s.batch.policy_advantages[ui] >= 0.0)
      s.batch.old_log_probs[ui] = lp - std::log(1.0 + 2.0 * s.hp.clip_eps);  // ratio = 1.4
    else
      s.batch.old_log_probs[ui] = lp + std::log(2.0);  // ratio = 0.5 < 0.8
  }

  const auto idx = all_indices(s.batch);
  const auto obj = ppo_policy_objective(s.batch, s.params, idx, s.hp.clip_eps);
  CHECK(obj.clip_fraction == 1.0);

  // finite differences confirm flatness in every policy parameter
  const MlpGrads fd = finite_difference_gradient(
      [&](const Mlp& net) {
        AgentParams q = s.params;
        q.policy = net;
        return ppo_policy_objective(s.batch, q, idx, s.hp.clip_eps).value;
      },
      s.params.policy, 1e-6);
  double worst = 0.0;
  for_each_grad(fd, [&](const double& x) { worst = std::max(worst, std::abs(x)); });
  CHECK(worst < 1e-9);

  // the analytic path produces an exactly-zero gradient: one update step on
  // fresh optimizer state moves nothing
  const Vec before = flatten_params(s.params);
  Rng shuffle(1);
  HeadToggles heads;
  s.hp.epochs = 1;
  // value side still trains; only compare the policy and log_std
  const Mlp policy_before = s.params.policy;
  const Vec log_std_before = s.params.log_std;
  update(s.batch, s.params, s.opt, s.hp, s.ff, heads, s.prep.targets, shuffle);
  Vec policy_after;
  for_each_param(s.params.policy, [&](const double& x) { policy_after.push_back(x); });
  Vec policy_orig;
  for_each_param(policy_before, [&](const double& x) { policy_orig.push_back(x); });
  CHECK(policy_after == policy_orig);
  CHECK(s.params.log_std == log_std_before);
}

TEST_CASE("value_loss_combined: c = 0 reduces to scaled value MSE") {
  Setup s = make_setup("point_mass", 7, 32, 32, 1);
  const auto idx = all_indices(s.batch);
  const auto out = value_loss_combined(s.batch, s.params, s.prep.targets, idx, 0.5, 0.0, 0.0);
  double mse = 0.0;
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const double d = eval_value(s.params, s.batch.obs[ui]) - s.batch.returns[ui];
    mse += d * d;
  }
  mse /= static_cast<double>(idx.size());
  CHECK(out.total == doctest::Approx(0.5 * mse).epsilon(1e-14));
  CHECK(out.ve == out.ve);  // finite
}

TEST_CASE("value_loss_combined: perfect fits give (near) zero loss") {
  Setup s = make_setup("point_mass", 9, 16, 16, 1);
  const auto idx = all_indices(s.batch);
  // overwrite the targets with the agent's own predictions
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const auto ev = value_and_heads(s.params, s.batch.obs[ui]);
    s.batch.returns[ui] = ev.value;
    s.prep.targets.vex_target[ui] = ev.ve_pred;
    s.prep.targets.vex_valid[ui] = 1;
    s.batch.next_obs[ui] = ev.fs_pred;
    s.prep.targets.fs_valid[ui] = 1;
  }
  const auto out =
      value_loss_combined(s.batch, s.params, s.prep.targets, idx, 0.5, 0.5, 0.01);
  CHECK(out.value_mse == 0.0);
  CHECK(out.ve == 0.0);
  CHECK(out.fs == doctest::Approx(0.0).epsilon(1e-6));  // cosine epsilon guard
  CHECK(out.total == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("table defaults: c_VE = 0.5, c_FS = 0.01") {
  const HyperParams hp;
  CHECK(hp.c_ve == 0.5);
  CHECK(hp.c_fs == 0.01);
  CHECK(hp.value_coef == 0.5);
}

TEST_CASE("epochs = 0 leaves parameters unchanged") {
  Setup s = make_setup("point_mass", 13, 16, 16, 0);
  const Vec before = flatten_params(s.params);
  Rng shuffle(4);
  update(s.batch, s.params, s.opt, s.hp, s.ff, HeadToggles{}, s.prep.targets, shuffle);
  CHECK(flatten_params(s.params) == before);
}

TEST_CASE("one-minibatch update equals Adam applied to finite-difference gradients") {
  Setup s = make_setup("point_mass", 21, 8, 8, 1, 4);
  s.ff.grad_clip = 0.0;  // isolate the gradient path from the clip factor
  const auto idx = all_indices(s.batch);
  const HeadToggles heads;

  // numeric gradients of the two objectives at the pre-update parameters
  const MlpGrads fd_policy = finite_difference_gradient(
      [&](const Mlp& net) {
        AgentParams q = s.params;
        q.policy = net;
        return -ppo_policy_objective(s.batch, q, idx, s.hp.clip_eps).value;
      },
      s.params.policy, 1e-6);
  const Vec fd_log_std = finite_difference_gradient_vec(
      [&](const Vec& ls) {
        AgentParams q = s.params;
        q.log_std = ls;
        return -ppo_policy_objective(s.batch, q, idx, s.hp.clip_eps).value;
      },
      s.params.log_std, 1e-6);
  const MlpGrads fd_trunk = finite_difference_gradient(
      [&](const Mlp& net) {
        AgentParams q = s.params;
        q.trunk = net;
        return value_loss_combined(s.batch, q, s.prep.targets, idx, s.hp.value_coef, s.hp.c_ve,
                                   s.hp.c_fs, heads)
            .total;
      },
      s.params.trunk, 1e-6);

  // hand-apply Adam to the numeric gradients
  AgentParams expect = s.params;
  AdamState st_p = make_adam_state(expect.policy);
  adam_step(expect.policy, fd_policy, st_p, s.hp.lr);
  AdamVecState st_ls = make_adam_vec_state(expect.log_std.size());
  adam_step_vec(expect.log_std, fd_log_std, st_ls, s.hp.lr);
  AdamState st_t = make_adam_state(expect.trunk);
  adam_step(expect.trunk, fd_trunk, st_t, s.hp.lr);

  Rng shuffle(9);
  update(s.batch, s.params, s.opt, s.hp, s.ff, heads, s.prep.targets, shuffle);

  Vec got, want;
  for_each_param(s.params.policy, [&](const double& x) { got.push_back(x); });
  for_each_param(expect.policy, [&](const double& x) { want.push_back(x); });
  for (std::size_t k = 0; k < got.size(); ++k)
    CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-6));

  got.clear();
  want.clear();
  for_each_param(s.params.trunk, [&](const double& x) { got.push_back(x); });
  for_each_param(expect.trunk, [&](const double& x) { want.push_back(x); });
  for (std::size_t k = 0; k < got.size(); ++k)
    CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-6));

  for (std::size_t k = 0; k < s.params.log_std.size(); ++k)
    CHECK(s.params.log_std[k] == doctest::Approx(expect.log_std[k]).epsilon(1e-6));
}

TEST_CASE("full combined gradient matches finite differences on random instances") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Setup s = make_setup("point_mass", 100 + static_cast<std::uint64_t>(trial) * 7, 8, 8, 1, 4);
    const auto idx = all_indices(s.batch);
    const HeadToggles heads;

    // analytic gradients via one minibatch pass (no clipping, no step)
    AgentGrads g = zero_grads_like(s.params);
    detail::MinibatchStats ms;
    FeatureFlags ff;
    ff.grad_clip = 0.0;
    AgentParams scratch = s.params;
    AgentOptimizers opt2 = make_optimizers(scratch);
    HyperParams hp = s.hp;
    hp.lr = 0.0;  // evaluate gradients without moving parameters
    detail::value_minibatch_step(s.batch, scratch, opt2, s.prep.targets, idx, hp, ff, heads, g,
                                 ms);

    for (const char* which : {"trunk", "value_head", "ve_head", "fs_head"}) {
      const Mlp& net = which == std::string("trunk")        ? s.params.trunk
                       : which == std::string("value_head") ? s.params.value_head
                       : which == std::string("ve_head")    ? s.params.ve_head
                                                            : s.params.fs_head;
      const MlpGrads& analytic = which == std::string("trunk")        ? g.trunk
                                 : which == std::string("value_head") ? g.value_head
                                 : which == std::string("ve_head")    ? g.ve_head
                                                                      : g.fs_head;
      const MlpGrads fd = finite_difference_gradient(
          [&](const Mlp& candidate) {
            AgentParams q = s.params;
            if (which == std::string("trunk")) q.trunk = candidate;
            else if (which == std::string("value_head")) q.value_head = candidate;
            else if (which == std::string("ve_head")) q.ve_head = candidate;
            else q.fs_head = candidate;
            return value_loss_combined(s.batch, q, s.prep.targets, idx, s.hp.value_coef,
                                       s.hp.c_ve, s.hp.c_fs, heads)
                .total;
          },
          net, 1e-6);
      CHECK(max_rel_error(analytic, fd) < 1e-4);
    }
  }
}

TEST_CASE("reduction: zero MERL coefficients reproduce baseline PPO bit for bit") {
  const std::uint64_t seed = 2024;
  const int updates = 10;

  auto run_arm = [&](bool heads_on) {
    auto e = env::make_env("point_mass");
    AgentParams params =
        make_agent(e->observation_spec(), e->action_spec(), Arch::Separate, seed, 8, 2);
    AgentOptimizers opt = make_optimizers(params);
    HyperParams hp;
    hp.horizon = 64;
    hp.minibatch_size = 32;
    hp.epochs = 3;
    hp.c_ve = 0.0;
    hp.c_fs = 0.0;
    FeatureFlags ff;
    HeadToggles heads{heads_on, heads_on};
    RolloutCollector col(env::env_factory("point_mass"), 1, seed + 9);
    Rng shuffle(Rng::mix(seed, 0xF00D));
    std::vector<Vec> trajectory;
    for (int k = 0; k < updates; ++k) {
      RolloutBatch b = col.collect(params, hp.horizon);
      const auto prep = prepare_batch(b, hp, ff);
      update(b, params, opt, hp, ff, heads, prep.targets, shuffle);
      trajectory.push_back(flatten_core_params(params));
    }
    return trajectory;
  };

  const auto merl_arm = run_arm(true);
  const auto baseline_arm = run_arm(false);
  REQUIRE(merl_arm.size() == baseline_arm.size());
  for (std::size_t k = 0; k < merl_arm.size(); ++k) {
    REQUIRE(merl_arm[k].size() == baseline_arm[k].size());
    for (std::size_t j = 0; j < merl_arm[k].size(); ++j)
      CHECK(merl_arm[k][j] == baseline_arm[k][j]);  // exact, no tolerance
  }
}

TEST_CASE("shared trunk update trains and keeps losses finite") {
  auto e = env::make_env("grid_rooms_a");
  AgentParams params =
      make_agent(e->observation_spec(), e->action_spec(), Arch::SharedTrunk, 55, 16, 2);
  AgentOptimizers opt = make_optimizers(params);
  HyperParams hp;
  hp.horizon = 32;
  hp.minibatch_size = 16;
  hp.epochs = 3;
  hp.num_actors = 2;
  FeatureFlags ff;
  RolloutCollector col(env::env_factory("grid_rooms_a"), 2, 77);
  Rng shuffle(10);

  const Vec before = flatten_params(params);
  RolloutBatch b = col.collect(params, hp.horizon);
  const auto prep = prepare_batch(b, hp, ff);
  const auto stats = update(b, params, opt, hp, ff, HeadToggles{}, prep.targets, shuffle);

  CHECK(flatten_params(params) != before);
  CHECK(std::isfinite(stats.policy_loss));
  CHECK(std::isfinite(stats.value_mse));
  CHECK(std::isfinite(stats.ve_loss));
  CHECK(std::isfinite(stats.fs_loss));
  CHECK(stats.ratio_mean > 0.0);
}

TEST_CASE("shared trunk gradients match finite differences through the whole objective") {
  const char* env_id;
  SUBCASE("discrete") { env_id = "grid_rooms_a"; }
  SUBCASE("continuous") { env_id = "point_mass"; }
  auto e = env::make_env(env_id);
  AgentParams params =
      make_agent(e->observation_spec(), e->action_spec(), Arch::SharedTrunk, 23, 6, 2);
  HyperParams hp;
  hp.horizon = 8;
  hp.minibatch_size = 8;
  hp.epochs = 1;
  FeatureFlags ff;
  ff.grad_clip = 0.0;
  RolloutCollector col(env::env_factory(env_id), 1, 3);
  RolloutBatch b = col.collect(params, hp.horizon);
  const auto prep = prepare_batch(b, hp, ff);
  const auto idx = all_indices(b);
  const HeadToggles heads;

  AgentGrads g = zero_grads_like(params);
  detail::MinibatchStats ms;
  AgentParams scratch = params;
  AgentOptimizers opt = make_optimizers(scratch);
  HyperParams hp0 = hp;
  hp0.lr = 0.0;
  detail::shared_minibatch_step(b, scratch, opt, prep.targets, idx, hp0, ff, heads, g, ms);

  auto total_loss = [&](const AgentParams& q) {
    return -ppo_policy_objective(b, q, idx, hp.clip_eps).value +
           value_loss_combined(b, q, prep.targets, idx, hp.value_coef, hp.c_ve, hp.c_fs, heads)
               .total;
  };

  const MlpGrads fd_trunk = finite_difference_gradient(
      [&](const Mlp& net) {
        AgentParams q = params;
        q.trunk = net;
        return total_loss(q);
      },
      params.trunk, 1e-6);
  CHECK(max_rel_error(g.trunk, fd_trunk) < 1e-4);

  const MlpGrads fd_head = finite_difference_gradient(
      [&](const Mlp& net) {
        AgentParams q = params;
        q.policy_head = net;
        return total_loss(q);
      },
      params.policy_head, 1e-6);
  CHECK(max_rel_error(g.policy_head, fd_head) < 1e-4);
}

TEST_CASE("fully masked auxiliary targets give zero loss and zero head gradients") {
  Setup s = make_setup("point_mass", 41, 8, 8, 1, 4);
  const auto idx = all_indices(s.batch);
  std::fill(s.prep.targets.vex_valid.begin(), s.prep.targets.vex_valid.end(), 0);
  std::fill(s.prep.targets.fs_valid.begin(), s.prep.targets.fs_valid.end(), 0);

  const auto loss =
      value_loss_combined(s.batch, s.params, s.prep.targets, idx, 0.5, 0.5, 0.01);
  CHECK(loss.ve == 0.0);
  CHECK(loss.fs == 0.0);

  AgentGrads g = zero_grads_like(s.params);
  detail::MinibatchStats ms;
  AgentParams scratch = s.params;
  AgentOptimizers opt = make_optimizers(scratch);
  HyperParams hp = s.hp;
  hp.lr = 0.0;
  FeatureFlags ff;
  ff.grad_clip = 0.0;
  detail::value_minibatch_step(s.batch, scratch, opt, s.prep.targets, idx, hp, ff, HeadToggles{},
                               g, ms);
  for_each_grad(g.ve_head, [](const double& x) { CHECK(x == 0.0); });
  for_each_grad(g.fs_head, [](const double& x) { CHECK(x == 0.0); });
  CHECK(ms.ve == 0.0);
  CHECK(ms.fs == 0.0);
}

TEST_CASE("hyperparameter validation rejects bad settings") {
  HyperParams hp;
  hp.gamma = 1.0;
  CHECK_THROWS_AS(validate(hp), ConfigError);
  hp = HyperParams{};
  hp.minibatch_size = 3;  // does not divide 2048
  CHECK_THROWS_AS(validate(hp), ConfigError);
  hp = HyperParams{};
  hp.lambda = 1.5;
  CHECK_THROWS_AS(validate(hp), ConfigError);
  CHECK_NOTHROW(validate(HyperParams{}));
}
