#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "merl/gradcheck.hpp"
#include "merl/ppo.hpp"

namespace merl {

// Finite-difference verification of every analytic gradient path in the
// training objective, on synthetic batches. Used by the `gradcheck` CLI
// subcommand and the acceptance suite.

struct GradcheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool all_pass = false;
};

struct GradcheckOptions {
  int instances = 50;
  std::uint64_t seed = 0;
  int obs_dim = 3;
  int action_dim = 2;
  int hidden = 6;
  int batch = 8;
  double tolerance = 1e-4;
};

namespace detail {

// Synthetic minibatch with controlled distance from the clip kinks, so the
// piecewise objective is differentiable at the evaluation point.
inline RolloutBatch synthetic_batch(const AgentParams& params, Rng& rng, int n, double clip_eps) {
  RolloutBatch b;
  b.num_actors = 1;
  b.horizon = n;
  b.obs_dim = params.obs_dim;
  const std::size_t un = static_cast<std::size_t>(n);
  b.obs.resize(un);
  b.next_obs.resize(un);
  b.actions.resize(un);
  b.old_log_probs.assign(un, 0.0);
  b.rewards.assign(un, 0.0);
  b.values.assign(un, 0.0);
  b.next_values.assign(un, 0.0);
  b.terminal.assign(un, 0);
  b.truncated.assign(un, 0);
  b.advantages.assign(un, 0.0);
  b.returns.assign(un, 0.0);
  b.policy_advantages.assign(un, 0.0);

  for (std::size_t i = 0; i < un; ++i) {
    Vec obs(static_cast<std::size_t>(params.obs_dim));
    for (auto& x : obs) x = rng.normal();
    b.obs[i] = obs;
    Vec nxt(static_cast<std::size_t>(params.obs_dim));
    for (auto& x : nxt) x = rng.normal();
    b.next_obs[i] = nxt;

    const auto pe = eval_policy(params, obs);
    const auto sample = sample_action(pe.dist, rng);
    b.actions[i] = sample.action;

    double adv = rng.normal();
    if (std::abs(adv) < 0.1) adv = adv < 0 ? -0.1 : 0.1;
    b.policy_advantages[i] = adv;
    b.advantages[i] = adv;

    // keep a safe margin from the kink where min() switches branches
    double lp_old = 0.0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      lp_old = sample.log_prob - rng.uniform(-0.5, 0.5);
      const double ratio = std::exp(sample.log_prob - lp_old);
      const double margin = std::abs(ratio * adv - clip_g(clip_eps, adv));
      if (margin > 1e-3 * std::max(1.0, std::abs(adv))) break;
    }
    b.old_log_probs[i] = lp_old;

    b.returns[i] = rng.normal();
    b.values[i] = rng.normal();
  }
  return b;
}

inline MerlTargets synthetic_targets(Rng& rng, const RolloutBatch& b) {
  MerlTargets t;
  const std::size_t n = static_cast<std::size_t>(b.size());
  t.vex_target.assign(n, 0.0);
  t.vex_valid.assign(n, 0);
  t.fs_valid.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    t.vex_valid[i] = rng.uniform() < 0.8 ? 1 : 0;
    t.vex_target[i] = rng.uniform(-1.0, 1.0);
    t.fs_valid[i] = rng.uniform() < 0.85 ? 1 : 0;
  }
  t.num_segments = 1;
  return t;
}

}  // namespace detail

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt = {}) {
  GradcheckReport report;
  GradcheckEntry policy_c{"policy_clip_objective(continuous)"};
  GradcheckEntry policy_d{"policy_clip_objective(discrete)"};
  GradcheckEntry value_mse{"value_mse"};
  GradcheckEntry ve{"ve_loss"};
  GradcheckEntry fs{"fs_loss"};
  GradcheckEntry combined{"combined_value_objective"};
  for (auto* e : {&policy_c, &policy_d, &value_mse, &ve, &fs, &combined})
    e->tolerance = opt.tolerance;

  Rng rng(Rng::mix(opt.seed, 0x6C));
  const double clip_eps = 0.2;
  const double h = 1e-6;

  env::ObservationSpec ospec;
  ospec.dim = opt.obs_dim;
  ospec.range.assign(static_cast<std::size_t>(opt.obs_dim), {-1.0, 1.0});
  env::ActionSpec cont;
  cont.kind = env::ActionSpec::Kind::Continuous;
  cont.dim = opt.action_dim;
  cont.low.assign(static_cast<std::size_t>(opt.action_dim), -1.0);
  cont.high.assign(static_cast<std::size_t>(opt.action_dim), 1.0);
  env::ActionSpec disc;
  disc.kind = env::ActionSpec::Kind::Discrete;
  disc.n = std::max(2, opt.action_dim + 1);

  HyperParams hp;
  hp.clip_eps = clip_eps;
  hp.lr = 0.0;  // extract gradients without moving parameters
  FeatureFlags ff;
  ff.grad_clip = 0.0;

  for (int inst = 0; inst < opt.instances; ++inst) {
    const std::uint64_t aseed = rng.next_u64();

    // --- policy objective, continuous and discrete ---
    for (bool continuous : {true, false}) {
      AgentParams params = make_agent(ospec, continuous ? cont : disc, Arch::Separate, aseed,
                                      opt.hidden, 2);
      RolloutBatch b = detail::synthetic_batch(params, rng, opt.batch, clip_eps);
      std::vector<int> idx(static_cast<std::size_t>(b.size()));
      std::iota(idx.begin(), idx.end(), 0);

      AgentGrads g = zero_grads_like(params);
      detail::MinibatchStats ms;
      AgentParams scratch = params;
      AgentOptimizers o = make_optimizers(scratch);
      detail::policy_minibatch_step(b, scratch, o, idx, hp, ff, g, ms);

      const MlpGrads fd = finite_difference_gradient(
          [&](const Mlp& net) {
            AgentParams q = params;
            q.policy = net;
            return -ppo_policy_objective(b, q, idx, clip_eps).value;
          },
          params.policy, h);
      GradcheckEntry& entry = continuous ? policy_c : policy_d;
      entry.max_rel_err = std::max(entry.max_rel_err, max_rel_error(g.policy, fd));
      if (continuous) {
        const Vec fd_ls = finite_difference_gradient_vec(
            [&](const Vec& ls) {
              AgentParams q = params;
              q.log_std = ls;
              return -ppo_policy_objective(b, q, idx, clip_eps).value;
            },
            params.log_std, h);
        entry.max_rel_err = std::max(entry.max_rel_err, max_rel_error_vec(g.log_std, fd_ls));
      }
    }

    // --- value-side losses ---
    AgentParams params = make_agent(ospec, cont, Arch::Separate, aseed ^ 0xABCD, opt.hidden, 2);
    RolloutBatch b = detail::synthetic_batch(params, rng, opt.batch, clip_eps);
    const MerlTargets targets = detail::synthetic_targets(rng, b);
    std::vector<int> idx(static_cast<std::size_t>(b.size()));
    std::iota(idx.begin(), idx.end(), 0);

    struct LossCase {
      GradcheckEntry* entry;
      double vc, cve, cfs;
    };
    const LossCase cases[] = {{&value_mse, 1.0, 0.0, 0.0},
                              {&ve, 0.0, 1.0, 0.0},
                              {&fs, 0.0, 0.0, 1.0},
                              {&combined, 0.5, 0.5, 0.01}};
    for (const auto& lc : cases) {
      HyperParams hpl = hp;
      hpl.value_coef = lc.vc;
      hpl.c_ve = lc.cve;
      hpl.c_fs = lc.cfs;
      AgentGrads g = zero_grads_like(params);
      detail::MinibatchStats ms;
      AgentParams scratch = params;
      AgentOptimizers o = make_optimizers(scratch);
      detail::value_minibatch_step(b, scratch, o, targets, idx, hpl, ff, HeadToggles{}, g, ms);

      auto loss_with = [&](const AgentParams& q) {
        return value_loss_combined(b, q, targets, idx, lc.vc, lc.cve, lc.cfs).total;
      };
      const std::vector<std::pair<const Mlp*, const MlpGrads*>> parts = {
          {&params.trunk, &g.trunk},
          {&params.value_head, &g.value_head},
          {&params.ve_head, &g.ve_head},
          {&params.fs_head, &g.fs_head}};
      for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const MlpGrads fd = finite_difference_gradient(
            [&](const Mlp& net) {
              AgentParams q = params;
              if (pi == 0) q.trunk = net;
              else if (pi == 1) q.value_head = net;
              else if (pi == 2) q.ve_head = net;
              else q.fs_head = net;
              return loss_with(q);
            },
            *parts[pi].first, h);
        lc.entry->max_rel_err = std::max(lc.entry->max_rel_err, max_rel_error(*parts[pi].second, fd));
      }
    }
  }

  report.entries = {policy_c, policy_d, value_mse, ve, fs, combined};
  report.all_pass = true;
  for (auto& e : report.entries) {
    e.pass = e.max_rel_err <= e.tolerance;
    report.all_pass = report.all_pass && e.pass;
  }
  return report;
}

}  // namespace merl
