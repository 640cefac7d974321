#pragma once

#include <numeric>
#include <span>

#include "merl/agent.hpp"
#include "merl/rollout.hpp"
#include "merl/vex.hpp"

namespace merl {

// All scalars of the two tuned profiles live here; defaults are the
// control-task column.
struct HyperParams {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  int horizon = 2048;
  int epochs = 10;
  int minibatch_size = 64;
  double lr = 3e-4;
  double value_coef = 0.5;
  double c_ve = 0.5;
  double c_fs = 0.01;
  int num_actors = 1;
  long total_steps = 200000;
};

inline void validate(const HyperParams& h) {
  if (!(h.gamma >= 0.0 && h.gamma < 1.0)) throw ConfigError("gamma must be in [0, 1)");
  if (!(h.lambda >= 0.0 && h.lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
  if (!(h.clip_eps > 0.0)) throw ConfigError("clip epsilon must be > 0");
  if (h.horizon <= 0 || h.num_actors <= 0) throw ConfigError("horizon and actors must be > 0");
  if (h.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (h.minibatch_size <= 0 || (h.horizon * h.num_actors) % h.minibatch_size != 0)
    throw ConfigError("minibatch size must divide num_actors * horizon");
  if (!(h.lr > 0.0)) throw ConfigError("learning rate must be > 0");
}

struct FeatureFlags {
  bool normalize_advantages = true;
  double grad_clip = 0.5;      // global-norm cap per optimizer group; <= 0 disables
  double entropy_coef = 0.0;   // diagnostic-only objective term, off by default
};

struct HeadToggles {
  bool ve = true;
  bool fs = true;
};

struct UpdateStats {
  double policy_loss = 0.0;  // negative clipped-surrogate objective
  double value_mse = 0.0;
  double ve_loss = 0.0;
  double fs_loss = 0.0;
  double ratio_mean = 1.0;
  double ratio_max = 1.0;
  double clip_fraction = 0.0;
  double grad_norm_policy = 0.0;
  double grad_norm_value = 0.0;
  double entropy = 0.0;
};

// Clipped advantage coefficient: (1 + eps) A for non-negative A, else
// (1 - eps) A.
inline double clip_g(double eps, double adv) {
  return adv >= 0.0 ? (1.0 + eps) * adv : (1.0 - eps) * adv;
}

struct PolicyObjective {
  double value = 0.0;  // minibatch mean of min(ratio * A, g(eps, A))
  double ratio_mean = 0.0;
  double ratio_max = 0.0;
  double clip_fraction = 0.0;
};

// Evaluation-only clipped surrogate over a minibatch, against the frozen
// collection-time log probabilities.
inline PolicyObjective ppo_policy_objective(const RolloutBatch& b, const AgentParams& params,
                                            std::span<const int> idx, double clip_eps) {
  if (b.policy_advantages.size() != static_cast<std::size_t>(b.size()))
    throw UsageError("ppo_policy_objective: advantages not prepared");
  PolicyObjective out;
  double acc = 0.0, racc = 0.0;
  int clipped_count = 0;
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const auto pe = eval_policy(params, b.obs[ui]);
    const double lp = log_prob(pe.dist, b.actions[ui]);
    const double ratio = std::exp(lp - b.old_log_probs[ui]);
    if (!std::isfinite(ratio))
      throw NumericalError("ppo_policy_objective: non-finite ratio at index " + std::to_string(i));
    const double adv = b.policy_advantages[ui];
    const double unclipped = ratio * adv;
    const double clipped = clip_g(clip_eps, adv);
    acc += std::min(unclipped, clipped);
    racc += ratio;
    out.ratio_max = std::max(out.ratio_max, ratio);
    if (unclipped > clipped) clipped_count += 1;
  }
  const double m = static_cast<double>(idx.size());
  out.value = acc / m;
  out.ratio_mean = racc / m;
  out.clip_fraction = clipped_count / m;
  return out;
}

struct CombinedValueLoss {
  double total = 0.0;
  double value_mse = 0.0;
  double ve = 0.0;
  double fs = 0.0;
};

// Combined value objective: value_coef * MSE(V, R) plus the
// coefficient-weighted auxiliary losses over their valid masks.
inline CombinedValueLoss value_loss_combined(const RolloutBatch& b, const AgentParams& params,
                                             const MerlTargets& targets, std::span<const int> idx,
                                             double value_coef, double c_ve, double c_fs,
                                             const HeadToggles& heads = {}) {
  CombinedValueLoss out;
  int m_ve = 0, m_fs = 0;
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    if (heads.ve && targets.vex_valid[ui]) m_ve += 1;
    if (heads.fs && targets.fs_valid[ui]) m_fs += 1;
  }
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const auto ev = eval_value_and_heads(params, b.obs[ui], heads.ve, heads.fs);
    const double vdiff = ev.value - b.returns[ui];
    out.value_mse += vdiff * vdiff;
    if (heads.ve && targets.vex_valid[ui]) {
      const double d = ev.ve - targets.vex_target[ui];
      out.ve += d * d;
    }
    if (heads.fs && targets.fs_valid[ui]) out.fs += cosine_loss(ev.fs, b.next_obs[ui]);
  }
  out.value_mse /= static_cast<double>(idx.size());
  out.ve = m_ve > 0 ? out.ve / m_ve : 0.0;
  out.fs = m_fs > 0 ? out.fs / m_fs : 0.0;
  out.total = value_coef * out.value_mse + c_ve * out.ve + c_fs * out.fs;
  return out;
}

namespace detail {

struct MinibatchStats {
  double objective = 0.0;
  double value_mse = 0.0, ve = 0.0, fs = 0.0;
  double ratio_mean = 0.0, ratio_max = 0.0, clip_fraction = 0.0;
  double policy_norm = 0.0, value_norm = 0.0;
};

inline void apply_global_clip(std::vector<MlpGrads*> nets, Vec* vec_grads, double cap,
                              double* norm_out) {
  std::vector<const MlpGrads*> cnets(nets.begin(), nets.end());
  const double norm = grad_norm(cnets, vec_grads);
  *norm_out = norm;
  if (cap > 0.0 && norm > cap) scale_grads(nets, vec_grads, cap / norm);
}

// One gradient step on the policy group (separate mode).
inline void policy_minibatch_step(const RolloutBatch& b, AgentParams& params,
                                  AgentOptimizers& opt, std::span<const int> idx,
                                  const HyperParams& hp, const FeatureFlags& ff,
                                  AgentGrads& g, MinibatchStats& st) {
  zero_grads(g.policy);
  std::fill(g.log_std.begin(), g.log_std.end(), 0.0);
  const double m = static_cast<double>(idx.size());

  double acc = 0.0, racc = 0.0, rmax = 0.0;
  int clipped_count = 0;
  Vec d_mean, d_ls, d_logits;
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const auto pe = eval_policy(params, b.obs[ui]);
    const double lp = log_prob(pe.dist, b.actions[ui]);
    const double ratio = std::exp(lp - b.old_log_probs[ui]);
    if (!std::isfinite(ratio))
      throw NumericalError("update: non-finite policy ratio at index " + std::to_string(i));
    const double adv = b.policy_advantages[ui];
    const double unclipped = ratio * adv;
    const double clipped = clip_g(hp.clip_eps, adv);
    acc += std::min(unclipped, clipped);
    racc += ratio;
    rmax = std::max(rmax, ratio);

    // dJ/d(lp) = ratio * A on the unclipped branch, exactly 0 when clipped
    double d_obj_dlp = 0.0;
    if (unclipped <= clipped)
      d_obj_dlp = unclipped / m;
    else
      clipped_count += 1;

    const double d_loss_dlp = -d_obj_dlp;  // Adam minimizes
    if (d_loss_dlp != 0.0 || ff.entropy_coef > 0.0) {
      log_prob_param_grads(pe.dist, b.actions[ui], &d_mean, &d_ls, &d_logits);
      if (params.continuous_actions) {
        Vec out_grad(d_mean.size());
        for (std::size_t k = 0; k < d_mean.size(); ++k) out_grad[k] = d_loss_dlp * d_mean[k];
        backward(params.policy, pe.net_cache, out_grad, g.policy);
        for (std::size_t k = 0; k < d_ls.size(); ++k) g.log_std[k] += d_loss_dlp * d_ls[k];
      } else {
        Vec out_grad(d_logits.size());
        for (std::size_t k = 0; k < d_logits.size(); ++k) out_grad[k] = d_loss_dlp * d_logits[k];
        backward(params.policy, pe.net_cache, out_grad, g.policy);
      }
      if (ff.entropy_coef > 0.0) {
        // ascend entropy alongside the surrogate
        Vec he_ls, he_logits;
        entropy_param_grads(pe.dist, &he_ls, &he_logits);
        const double w = -ff.entropy_coef / m;
        if (params.continuous_actions) {
          for (std::size_t k = 0; k < he_ls.size(); ++k) g.log_std[k] += w * he_ls[k];
        } else {
          Vec out_grad(he_logits.size());
          for (std::size_t k = 0; k < he_logits.size(); ++k) out_grad[k] = w * he_logits[k];
          backward(params.policy, pe.net_cache, out_grad, g.policy);
        }
      }
    }
  }

  apply_global_clip({&g.policy}, &g.log_std, ff.grad_clip, &st.policy_norm);
  adam_step(params.policy, g.policy, opt.policy, hp.lr);
  if (params.continuous_actions) adam_step_vec(params.log_std, g.log_std, opt.log_std, hp.lr);

  st.objective = acc / m;
  st.ratio_mean = racc / m;
  st.ratio_max = rmax;
  st.clip_fraction = clipped_count / m;
}

// One gradient step on the value-plus-heads group (separate mode).
inline void value_minibatch_step(const RolloutBatch& b, AgentParams& params,
                                 AgentOptimizers& opt, const MerlTargets& targets,
                                 std::span<const int> idx, const HyperParams& hp,
                                 const FeatureFlags& ff, const HeadToggles& heads,
                                 AgentGrads& g, MinibatchStats& st) {
  zero_grads(g.trunk);
  zero_grads(g.value_head);
  zero_grads(g.ve_head);
  zero_grads(g.fs_head);
  const double m = static_cast<double>(idx.size());

  int m_ve = 0, m_fs = 0;
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    if (heads.ve && targets.vex_valid[ui]) m_ve += 1;
    if (heads.fs && targets.fs_valid[ui]) m_fs += 1;
  }

  double mse_acc = 0.0, ve_acc = 0.0, fs_acc = 0.0;
  Vec d_fs, fs_grad;
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const auto ev = eval_value_and_heads(params, b.obs[ui], heads.ve, heads.fs);

    const double vdiff = ev.value - b.returns[ui];
    mse_acc += vdiff * vdiff;
    const double d_value = hp.value_coef * 2.0 * vdiff / m;

    double d_ve = 0.0;
    if (heads.ve && targets.vex_valid[ui] && m_ve > 0) {
      const double d = ev.ve - targets.vex_target[ui];
      ve_acc += d * d;
      d_ve = hp.c_ve * 2.0 * d / m_ve;
    }

    if (heads.fs) d_fs.assign(ev.fs.size(), 0.0);
    if (heads.fs && targets.fs_valid[ui] && m_fs > 0) {
      fs_acc += cosine_loss(ev.fs, b.next_obs[ui], &fs_grad);
      for (std::size_t k = 0; k < fs_grad.size(); ++k) d_fs[k] = hp.c_fs * fs_grad[k] / m_fs;
    }

    value_heads_backward(params, ev, d_value, d_ve, d_fs, g);
  }

  apply_global_clip({&g.trunk, &g.value_head, &g.ve_head, &g.fs_head}, nullptr, ff.grad_clip,
                    &st.value_norm);
  adam_step(params.trunk, g.trunk, opt.trunk, hp.lr);
  adam_step(params.value_head, g.value_head, opt.value_head, hp.lr);
  if (heads.ve) adam_step(params.ve_head, g.ve_head, opt.ve_head, hp.lr);
  if (heads.fs) adam_step(params.fs_head, g.fs_head, opt.fs_head, hp.lr);

  st.value_mse = mse_acc / m;
  st.ve = m_ve > 0 ? ve_acc / m_ve : 0.0;
  st.fs = m_fs > 0 ? fs_acc / m_fs : 0.0;
}

// Shared-trunk minibatch step: policy, value and heads share one trunk and
// one optimizer step; the combined loss is the negative surrogate plus the
// combined value objective.
inline void shared_minibatch_step(const RolloutBatch& b, AgentParams& params,
                                  AgentOptimizers& opt, const MerlTargets& targets,
                                  std::span<const int> idx, const HyperParams& hp,
                                  const FeatureFlags& ff, const HeadToggles& heads,
                                  AgentGrads& g, MinibatchStats& st) {
  zero(g);
  const double m = static_cast<double>(idx.size());

  int m_ve = 0, m_fs = 0;
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    if (heads.ve && targets.vex_valid[ui]) m_ve += 1;
    if (heads.fs && targets.fs_valid[ui]) m_fs += 1;
  }

  double acc = 0.0, racc = 0.0, rmax = 0.0, mse_acc = 0.0, ve_acc = 0.0, fs_acc = 0.0;
  int clipped_count = 0;
  Vec d_mean, d_ls, d_logits, d_fs, fs_grad;
  for (int i : idx) {
    const std::size_t ui = static_cast<std::size_t>(i);
    const Vec x = params.scaler.apply(b.obs[ui]);

    HeadsEval ev;
    ev.embedding = forward(params.trunk, x, &ev.trunk_cache);
    ev.value = forward(params.value_head, ev.embedding, &ev.value_cache)[0];
    if (heads.ve) {
      ev.ve = forward(params.ve_head, ev.embedding, &ev.ve_cache)[0];
      ev.has_ve = true;
    }
    if (heads.fs) {
      ev.fs = forward(params.fs_head, ev.embedding, &ev.fs_cache);
      ev.has_fs = true;
    }
    ForwardCache head_cache;
    const Vec pol_out = forward(params.policy_head, ev.embedding, &head_cache);
    PolicyDistribution dist;
    dist.continuous = params.continuous_actions;
    if (dist.continuous) {
      dist.mean = pol_out;
      dist.log_std = params.log_std;
    } else {
      dist.logits = pol_out;
    }

    const double lp = log_prob(dist, b.actions[ui]);
    const double ratio = std::exp(lp - b.old_log_probs[ui]);
    if (!std::isfinite(ratio))
      throw NumericalError("update: non-finite policy ratio at index " + std::to_string(i));
    const double adv = b.policy_advantages[ui];
    const double unclipped = ratio * adv;
    const double clipped = clip_g(hp.clip_eps, adv);
    acc += std::min(unclipped, clipped);
    racc += ratio;
    rmax = std::max(rmax, ratio);

    double d_obj_dlp = 0.0;
    if (unclipped <= clipped)
      d_obj_dlp = unclipped / m;
    else
      clipped_count += 1;
    const double d_loss_dlp = -d_obj_dlp;

    Vec d_emb_policy(ev.embedding.size(), 0.0);
    if (d_loss_dlp != 0.0 || ff.entropy_coef > 0.0) {
      log_prob_param_grads(dist, b.actions[ui], &d_mean, &d_ls, &d_logits);
      Vec out_grad;
      if (params.continuous_actions) {
        out_grad.resize(d_mean.size());
        for (std::size_t k = 0; k < d_mean.size(); ++k) out_grad[k] = d_loss_dlp * d_mean[k];
        for (std::size_t k = 0; k < d_ls.size(); ++k) g.log_std[k] += d_loss_dlp * d_ls[k];
      } else {
        out_grad.resize(d_logits.size());
        for (std::size_t k = 0; k < d_logits.size(); ++k) out_grad[k] = d_loss_dlp * d_logits[k];
      }
      if (ff.entropy_coef > 0.0) {
        Vec he_ls, he_logits;
        entropy_param_grads(dist, &he_ls, &he_logits);
        const double w = -ff.entropy_coef / m;
        if (params.continuous_actions) {
          for (std::size_t k = 0; k < he_ls.size(); ++k) g.log_std[k] += w * he_ls[k];
        } else {
          for (std::size_t k = 0; k < he_logits.size(); ++k) out_grad[k] += w * he_logits[k];
        }
      }
      d_emb_policy = backward(params.policy_head, head_cache, out_grad, g.policy_head);
    }

    const double vdiff = ev.value - b.returns[ui];
    mse_acc += vdiff * vdiff;
    const double d_value = hp.value_coef * 2.0 * vdiff / m;

    double d_ve = 0.0;
    if (heads.ve && targets.vex_valid[ui] && m_ve > 0) {
      const double d = ev.ve - targets.vex_target[ui];
      ve_acc += d * d;
      d_ve = hp.c_ve * 2.0 * d / m_ve;
    }

    if (heads.fs) d_fs.assign(ev.fs.size(), 0.0);
    if (heads.fs && targets.fs_valid[ui] && m_fs > 0) {
      fs_acc += cosine_loss(ev.fs, b.next_obs[ui], &fs_grad);
      for (std::size_t k = 0; k < fs_grad.size(); ++k) d_fs[k] = hp.c_fs * fs_grad[k] / m_fs;
    }

    value_heads_backward(params, ev, d_value, d_ve, d_fs, g, &d_emb_policy);
  }

  apply_global_clip({&g.policy_head, &g.trunk, &g.value_head, &g.ve_head, &g.fs_head},
                    &g.log_std, ff.grad_clip, &st.value_norm);
  st.policy_norm = st.value_norm;  // single optimizer group in shared mode
  adam_step(params.policy_head, g.policy_head, opt.policy_head, hp.lr);
  adam_step(params.trunk, g.trunk, opt.trunk, hp.lr);
  adam_step(params.value_head, g.value_head, opt.value_head, hp.lr);
  if (heads.ve) adam_step(params.ve_head, g.ve_head, opt.ve_head, hp.lr);
  if (heads.fs) adam_step(params.fs_head, g.fs_head, opt.fs_head, hp.lr);
  if (params.continuous_actions) adam_step_vec(params.log_std, g.log_std, opt.log_std, hp.lr);

  st.objective = acc / m;
  st.ratio_mean = racc / m;
  st.ratio_max = rmax;
  st.clip_fraction = clipped_count / m;
  st.value_mse = mse_acc / m;
  st.ve = m_ve > 0 ? ve_acc / m_ve : 0.0;
  st.fs = m_fs > 0 ? fs_acc / m_fs : 0.0;
}

}  // namespace detail

// Full update pass: `epochs` shuffled sweeps of minibatch gradient steps.
// Collection-time quantities (old log probs, values, advantages, returns,
// auxiliary targets) stay frozen throughout. The shuffle stream is consumed
// identically whatever the head toggles, so disabling MERL reproduces plain
// PPO bit for bit.
inline UpdateStats update(const RolloutBatch& b, AgentParams& params, AgentOptimizers& opt,
                          const HyperParams& hp, const FeatureFlags& ff, const HeadToggles& heads,
                          const MerlTargets& targets, Rng& shuffle_rng) {
  validate(hp);
  if (b.policy_advantages.size() != static_cast<std::size_t>(b.size()) ||
      b.returns.size() != static_cast<std::size_t>(b.size()))
    throw UsageError("update: batch not prepared (advantages/returns missing)");

  const int n = b.size();
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);

  UpdateStats stats;
  stats.entropy = b.mean_entropy;
  stats.ratio_mean = 0.0;  // accumulated below; the no-epoch case restores 1
  stats.ratio_max = 0.0;
  AgentGrads g = zero_grads_like(params);
  long nb = 0;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    shuffle_indices(idx, shuffle_rng);
    for (int start = 0; start < n; start += hp.minibatch_size) {
      const std::span<const int> mb(idx.data() + start, static_cast<std::size_t>(hp.minibatch_size));
      detail::MinibatchStats ms;
      if (params.arch == Arch::Separate) {
        detail::policy_minibatch_step(b, params, opt, mb, hp, ff, g, ms);
        detail::value_minibatch_step(b, params, opt, targets, mb, hp, ff, heads, g, ms);
      } else {
        detail::shared_minibatch_step(b, params, opt, targets, mb, hp, ff, heads, g, ms);
      }
      if (!std::isfinite(ms.objective) || !std::isfinite(ms.value_mse) ||
          !std::isfinite(ms.ve) || !std::isfinite(ms.fs)) {
        throw NumericalError(
            "update aborted: non-finite loss (objective=" + std::to_string(ms.objective) +
            ", value_mse=" + std::to_string(ms.value_mse) + ", ve=" + std::to_string(ms.ve) +
            ", fs=" + std::to_string(ms.fs) + ") at epoch " + std::to_string(epoch));
      }
      stats.policy_loss += -ms.objective;
      stats.value_mse += ms.value_mse;
      stats.ve_loss += ms.ve;
      stats.fs_loss += ms.fs;
      stats.ratio_mean += ms.ratio_mean;
      stats.ratio_max = nb == 0 ? ms.ratio_max : std::max(stats.ratio_max, ms.ratio_max);
      stats.clip_fraction += ms.clip_fraction;
      stats.grad_norm_policy += ms.policy_norm;
      stats.grad_norm_value += ms.value_norm;
      nb += 1;
    }
  }
  if (nb > 0) {
    const double d = static_cast<double>(nb);
    stats.policy_loss /= d;
    stats.value_mse /= d;
    stats.ve_loss /= d;
    stats.fs_loss /= d;
    stats.ratio_mean /= d;
    stats.clip_fraction /= d;
    stats.grad_norm_policy /= d;
    stats.grad_norm_value /= d;
  } else {
    stats.ratio_mean = 1.0;
    stats.ratio_max = 1.0;
  }
  return stats;
}

// Collection-to-update plumbing shared by the training loop and tests:
// GAE, returns, segmentation, auxiliary targets, advantage normalization.
struct PreparedTargets {
  std::vector<EpisodeSegment> segments;
  MerlTargets targets;
};

inline PreparedTargets prepare_batch(RolloutBatch& b, const HyperParams& hp,
                                     const FeatureFlags& ff) {
  compute_gae(b, hp.gamma, hp.lambda);
  compute_returns(b);
  PreparedTargets out;
  out.segments = segment_rollout(b);
  out.targets = build_merl_targets(b, out.segments);
  normalize_advantages(b, ff.normalize_advantages);
  return out;
}

}  // namespace merl
