#pragma once

#include <cstdint>

#include "merl/adam.hpp"
#include "merl/distributions.hpp"
#include "merl/env/base.hpp"
#include "merl/mlp.hpp"

namespace merl {

enum class Arch { Separate, SharedTrunk };

// Fixed affine observation scaling derived from the environment's nominal
// ranges. Not learnable; serialized with the agent so checkpoints are
// self-contained.
struct ObsScaler {
  bool enabled = false;
  Vec center, half_range;

  Vec apply(const Vec& obs) const {
    if (!enabled) return obs;
    Vec out(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i)
      out[i] = (obs[i] - center[i]) / half_range[i];
    return out;
  }

  static ObsScaler from_spec(const env::ObservationSpec& spec, bool enabled) {
    ObsScaler s;
    s.enabled = enabled;
    s.center.resize(static_cast<std::size_t>(spec.dim));
    s.half_range.resize(static_cast<std::size_t>(spec.dim));
    for (int i = 0; i < spec.dim; ++i) {
      const auto [lo, hi] = spec.range[static_cast<std::size_t>(i)];
      s.center[static_cast<std::size_t>(i)] = 0.5 * (lo + hi);
      const double half = 0.5 * (hi - lo);
      s.half_range[static_cast<std::size_t>(i)] = half > 0.0 ? half : 1.0;
    }
    return s;
  }
};

// All learnable state of one agent.
//
// Separate mode: `policy` is a full network; `trunk` produces the value
// embedding (its tanh output is the last embedding layer), `value_head`
// maps it to a scalar. The auxiliary heads hang off the same embedding.
//
// Shared-trunk mode: `policy` is unused; `policy_head` reads the shared
// trunk embedding alongside the value and auxiliary heads.
//
// Each auxiliary head is exactly one fully-connected layer; the VE head
// outputs a scalar, the FS head outputs an observation-sized vector.
struct AgentParams {
  Arch arch = Arch::Separate;
  bool continuous_actions = true;
  int obs_dim = 0;
  int action_dim = 0;  // continuous dims or discrete action count
  int embed_dim = 0;
  ObsScaler scaler;

  Mlp policy;       // separate: obs -> action params
  Mlp policy_head;  // shared: embedding -> action params
  Mlp trunk;        // obs -> embedding (output activation tanh)
  Mlp value_head;   // embedding -> 1
  Mlp ve_head;      // embedding -> 1
  Mlp fs_head;      // embedding -> obs_dim
  Vec log_std;      // continuous only; state-independent
};

// Sub-seeds are derived per component so construction of one network never
// perturbs another (head initialization must not depend on which heads a
// run trains).
inline AgentParams make_agent(const env::ObservationSpec& obs_spec,
                              const env::ActionSpec& act_spec, Arch arch,
                              std::uint64_t seed, int hidden = 64, int depth = 2,
                              bool scale_observations = false) {
  AgentParams p;
  p.arch = arch;
  p.continuous_actions = act_spec.kind == env::ActionSpec::Kind::Continuous;
  p.obs_dim = obs_spec.dim;
  p.action_dim = p.continuous_actions ? act_spec.dim : act_spec.n;
  p.embed_dim = hidden;
  p.scaler = ObsScaler::from_spec(obs_spec, scale_observations);

  std::vector<int> trunk_dims{obs_spec.dim};
  for (int i = 0; i < depth; ++i) trunk_dims.push_back(hidden);

  std::vector<int> policy_dims = trunk_dims;
  policy_dims.push_back(p.action_dim);

  if (arch == Arch::Separate)
    p.policy = make_initialized_mlp(policy_dims, Rng::mix(seed, 1));
  else
    p.policy_head = make_initialized_mlp({hidden, p.action_dim}, Rng::mix(seed, 1));

  p.trunk = make_initialized_mlp(trunk_dims, Rng::mix(seed, 2), Activation::Tanh,
                                 Activation::Tanh);
  p.value_head = make_initialized_mlp({hidden, 1}, Rng::mix(seed, 3));
  p.ve_head = make_initialized_mlp({hidden, 1}, Rng::mix(seed, 4));
  p.fs_head = make_initialized_mlp({hidden, obs_spec.dim}, Rng::mix(seed, 5));
  if (p.continuous_actions) p.log_std.assign(static_cast<std::size_t>(p.action_dim), 0.0);
  return p;
}

// ---- forward evaluation ----

struct PolicyEval {
  PolicyDistribution dist;
  ForwardCache net_cache;   // separate: policy net; shared: policy head
  ForwardCache trunk_cache; // shared mode only
};

inline PolicyEval eval_policy(const AgentParams& p, const Vec& obs) {
  if (static_cast<int>(obs.size()) != p.obs_dim)
    throw ConfigError("eval_policy: observation dimension mismatch");
  const Vec x = p.scaler.apply(obs);
  PolicyEval ev;
  ev.dist.continuous = p.continuous_actions;
  Vec out;
  if (p.arch == Arch::Separate) {
    out = forward(p.policy, x, &ev.net_cache);
  } else {
    const Vec emb = forward(p.trunk, x, &ev.trunk_cache);
    out = forward(p.policy_head, emb, &ev.net_cache);
  }
  if (p.continuous_actions) {
    ev.dist.mean = std::move(out);
    ev.dist.log_std = p.log_std;
  } else {
    ev.dist.logits = std::move(out);
  }
  return ev;
}

inline PolicyDistribution policy_distribution(const AgentParams& p, const Vec& obs) {
  return eval_policy(p, obs).dist;
}

struct HeadsEval {
  double value = 0.0;
  double ve = 0.0;
  Vec fs;
  Vec embedding;
  ForwardCache trunk_cache, value_cache, ve_cache, fs_cache;
  bool has_ve = false, has_fs = false;
};

// One trunk evaluation; value and any requested heads read the same
// embedding.
inline HeadsEval eval_value_and_heads(const AgentParams& p, const Vec& obs,
                                      bool want_ve = true, bool want_fs = true) {
  if (static_cast<int>(obs.size()) != p.obs_dim)
    throw ConfigError("eval_value_and_heads: observation dimension mismatch");
  const Vec x = p.scaler.apply(obs);
  HeadsEval ev;
  ev.embedding = forward(p.trunk, x, &ev.trunk_cache);
  ev.value = forward(p.value_head, ev.embedding, &ev.value_cache)[0];
  if (want_ve) {
    ev.ve = forward(p.ve_head, ev.embedding, &ev.ve_cache)[0];
    ev.has_ve = true;
  }
  if (want_fs) {
    ev.fs = forward(p.fs_head, ev.embedding, &ev.fs_cache);
    ev.has_fs = true;
  }
  return ev;
}

struct ValueAndHeads {
  double value = 0.0;
  double ve_pred = 0.0;
  Vec fs_pred;
  Vec embedding;
};

inline ValueAndHeads value_and_heads(const AgentParams& p, const Vec& obs) {
  HeadsEval ev = eval_value_and_heads(p, obs, true, true);
  return {ev.value, ev.ve, std::move(ev.fs), std::move(ev.embedding)};
}

inline double eval_value(const AgentParams& p, const Vec& obs) {
  if (static_cast<int>(obs.size()) != p.obs_dim)
    throw ConfigError("eval_value: observation dimension mismatch");
  const Vec x = p.scaler.apply(obs);
  const Vec emb = forward(p.trunk, x);
  return forward(p.value_head, emb)[0];
}

// ---- gradients & optimizers ----

struct AgentGrads {
  MlpGrads policy, policy_head, trunk, value_head, ve_head, fs_head;
  Vec log_std;
};

inline AgentGrads zero_grads_like(const AgentParams& p) {
  AgentGrads g;
  if (p.arch == Arch::Separate)
    g.policy = zero_grads_like(p.policy);
  else
    g.policy_head = zero_grads_like(p.policy_head);
  g.trunk = zero_grads_like(p.trunk);
  g.value_head = zero_grads_like(p.value_head);
  g.ve_head = zero_grads_like(p.ve_head);
  g.fs_head = zero_grads_like(p.fs_head);
  g.log_std.assign(p.log_std.size(), 0.0);
  return g;
}

inline void zero(AgentGrads& g) {
  zero_grads(g.policy);
  zero_grads(g.policy_head);
  zero_grads(g.trunk);
  zero_grads(g.value_head);
  zero_grads(g.ve_head);
  zero_grads(g.fs_head);
  std::fill(g.log_std.begin(), g.log_std.end(), 0.0);
}

struct AgentOptimizers {
  AdamState policy, policy_head, trunk, value_head, ve_head, fs_head;
  AdamVecState log_std;
};

inline AgentOptimizers make_optimizers(const AgentParams& p) {
  AgentOptimizers o;
  if (p.arch == Arch::Separate)
    o.policy = make_adam_state(p.policy);
  else
    o.policy_head = make_adam_state(p.policy_head);
  o.trunk = make_adam_state(p.trunk);
  o.value_head = make_adam_state(p.value_head);
  o.ve_head = make_adam_state(p.ve_head);
  o.fs_head = make_adam_state(p.fs_head);
  o.log_std = make_adam_vec_state(p.log_std.size());
  return o;
}

// Accumulates value-side gradients for one sample given the loss gradients
// at each head output. Head gradients flow into the head layer and the
// trunk, never into a separate-mode policy. Returns nothing; the caller
// steps the optimizers after the minibatch.
inline void value_heads_backward(const AgentParams& p, const HeadsEval& ev, double d_value,
                                 double d_ve, const Vec& d_fs, AgentGrads& g,
                                 Vec* extra_embedding_grad = nullptr) {
  Vec d_emb = backward(p.value_head, ev.value_cache, {d_value}, g.value_head);
  if (ev.has_ve) {
    const Vec tmp = backward(p.ve_head, ev.ve_cache, {d_ve}, g.ve_head);
    for (std::size_t i = 0; i < d_emb.size(); ++i) d_emb[i] += tmp[i];
  }
  if (ev.has_fs) {
    const Vec tmp = backward(p.fs_head, ev.fs_cache, d_fs, g.fs_head);
    for (std::size_t i = 0; i < d_emb.size(); ++i) d_emb[i] += tmp[i];
  }
  if (extra_embedding_grad) {
    for (std::size_t i = 0; i < d_emb.size(); ++i) d_emb[i] += (*extra_embedding_grad)[i];
  }
  backward(p.trunk, ev.trunk_cache, d_emb, g.trunk);
}

// Global L2 norm across a group of gradient holders, accumulated in a fixed
// order.
inline double grad_norm(const std::vector<const MlpGrads*>& nets, const Vec* vec_grads = nullptr) {
  double ss = 0.0;
  for (const MlpGrads* g : nets)
    for_each_grad(*g, [&](const double& x) { ss += x * x; });
  if (vec_grads)
    for (double x : *vec_grads) ss += x * x;
  return std::sqrt(ss);
}

inline void scale_grads(std::vector<MlpGrads*> nets, Vec* vec_grads, double factor) {
  for (MlpGrads* g : nets)
    for_each_grad(*g, [&](double& x) { x *= factor; });
  if (vec_grads)
    for (double& x : *vec_grads) x *= factor;
}

}  // namespace merl
