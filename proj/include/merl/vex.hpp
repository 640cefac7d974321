#pragma once

#include <span>

#include "merl/common.hpp"
#include "merl/rollout.hpp"

namespace merl {

// Fraction of variance the value function explains about the returns over
// one trajectory:
//   1 - sum_t (R_t - V_t)^2 / sum_t (R_t - mean(R))^2
// Equals the coefficient of determination; at most 1, may be negative. The
// result is flagged undefined (never NaN) when the trajectory is shorter
// than 2 steps or the returns are (numerically) constant.
struct VexResult {
  double value = 0.0;
  bool defined = false;
};

inline constexpr double kVexDenomTol = 1e-8;

inline VexResult compute_vex(std::span<const double> returns, std::span<const double> values,
                             double denom_tol = kVexDenomTol) {
  if (returns.size() != values.size())
    throw UsageError("compute_vex: length mismatch");
  if (returns.size() < 2) return {};
  const double mean = mean_of(returns);
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < returns.size(); ++i) {
    ss_tot += (returns[i] - mean) * (returns[i] - mean);
    ss_res += (returns[i] - values[i]) * (returns[i] - values[i]);
  }
  if (ss_tot < denom_tol) return {};
  return {1.0 - ss_res / ss_tot, true};
}

// Contiguous single-episode index range [begin, end] inside a rollout.
// `bootstrapped` distinguishes truncation/horizon ends from genuine
// terminals.
struct EpisodeSegment {
  int begin = 0;
  int end = 0;  // inclusive
  bool bootstrapped = false;
  int length() const { return end - begin + 1; }
};

// Partitions the rollout into episode segments: cuts at every terminal or
// truncated step and at each actor's horizon boundary.
inline std::vector<EpisodeSegment> segment_rollout(const RolloutBatch& b) {
  std::vector<EpisodeSegment> segs;
  for (int actor = 0; actor < b.num_actors; ++actor) {
    int start = b.index(actor, 0);
    for (int t = 0; t < b.horizon; ++t) {
      const int i = b.index(actor, t);
      const bool horizon_end = (t == b.horizon - 1);
      if (b.episode_end(i) || horizon_end) {
        EpisodeSegment s;
        s.begin = start;
        s.end = i;
        s.bootstrapped = !b.terminal[static_cast<std::size_t>(i)];
        segs.push_back(s);
        start = i + 1;
      }
    }
  }
  return segs;
}

// Per-timestep training targets for the auxiliary heads.
//
// The segment-level explained-variance target is computed once from the
// collection-time values and broadcast to every timestep of its segment;
// segments where the quantity is undefined are masked out of the VE loss.
// The FS mask drops exactly the terminal transitions (the observation after
// a terminal belongs to a new episode); truncated and horizon-end steps use
// the actually observed next state.
struct MerlTargets {
  Vec vex_target;
  std::vector<std::uint8_t> vex_valid;
  std::vector<std::uint8_t> fs_valid;

  // per-update statistics over segments
  double vex_mean = 0.0, vex_min = 0.0, vex_max = 0.0;
  double masked_fraction = 0.0;
  int num_segments = 0;
};

inline MerlTargets build_merl_targets(const RolloutBatch& b,
                                      const std::vector<EpisodeSegment>& segments) {
  if (b.returns.size() != static_cast<std::size_t>(b.size()))
    throw UsageError("build_merl_targets: returns not computed");
  MerlTargets t;
  const std::size_t n = static_cast<std::size_t>(b.size());
  t.vex_target.assign(n, 0.0);
  t.vex_valid.assign(n, 0);
  t.fs_valid.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) t.fs_valid[i] = b.terminal[i] ? 0 : 1;

  t.num_segments = static_cast<int>(segments.size());
  int masked = 0;
  bool any = false;
  double acc = 0.0;
  for (const auto& s : segments) {
    const std::size_t len = static_cast<std::size_t>(s.length());
    const auto r = std::span<const double>(b.returns).subspan(static_cast<std::size_t>(s.begin), len);
    const auto v = std::span<const double>(b.values).subspan(static_cast<std::size_t>(s.begin), len);
    const VexResult vex = compute_vex(r, v);
    if (!vex.defined) {
      masked += 1;
      continue;
    }
    for (int i = s.begin; i <= s.end; ++i) {
      t.vex_target[static_cast<std::size_t>(i)] = vex.value;
      t.vex_valid[static_cast<std::size_t>(i)] = 1;
    }
    if (!any) {
      t.vex_min = t.vex_max = vex.value;
      any = true;
    } else {
      t.vex_min = std::min(t.vex_min, vex.value);
      t.vex_max = std::max(t.vex_max, vex.value);
    }
    acc += vex.value;
  }
  const int defined = t.num_segments - masked;
  t.vex_mean = defined > 0 ? acc / defined : 0.0;
  t.masked_fraction =
      t.num_segments > 0 ? static_cast<double>(masked) / t.num_segments : 0.0;
  return t;
}

// Squared-error regression of the VE head onto the broadcast segment
// targets, averaged over the valid-masked minibatch members; exactly 0 when
// nothing is valid.
inline double ve_loss(std::span<const double> ve_preds, const MerlTargets& t,
                      std::span<const int> idx) {
  if (ve_preds.size() != idx.size()) throw UsageError("ve_loss: preds/indices mismatch");
  double acc = 0.0;
  int valid = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = static_cast<std::size_t>(idx[k]);
    if (!t.vex_valid[i]) continue;
    const double d = ve_preds[k] - t.vex_target[i];
    acc += d * d;
    valid += 1;
  }
  return valid > 0 ? acc / valid : 0.0;
}

inline constexpr double kCosineNormEps = 1e-8;

// 1 - cosine similarity with each norm guarded additively; range [0, 2] up
// to guard effects. Optionally emits the gradient w.r.t. the prediction.
inline double cosine_loss(std::span<const double> pred, std::span<const double> target,
                          Vec* grad_pred = nullptr) {
  if (pred.size() != target.size()) throw UsageError("cosine_loss: size mismatch");
  const double np = norm2(pred), nt = norm2(target);
  const double gp = np + kCosineNormEps, gt = nt + kCosineNormEps;
  const double d = dot(pred, target);
  const double cos = d / (gp * gt);
  if (grad_pred) {
    grad_pred->assign(pred.size(), 0.0);
    // d(loss)/d(pred) = -target/(gp*gt) + d * (pred/np) / (gp^2 * gt)
    const double inv_np = np > 0.0 ? 1.0 / np : 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      (*grad_pred)[i] =
          -target[i] / (gp * gt) + d * (pred[i] * inv_np) / (gp * gp * gt);
    }
  }
  return 1.0 - cos;
}

// Cosine-distance loss of the FS head against the observed next state,
// averaged over the fs-valid minibatch members; 0 when nothing is valid.
inline double fs_loss(const std::vector<Vec>& fs_preds, const RolloutBatch& b,
                      const MerlTargets& t, std::span<const int> idx) {
  if (fs_preds.size() != idx.size()) throw UsageError("fs_loss: preds/indices mismatch");
  double acc = 0.0;
  int valid = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = static_cast<std::size_t>(idx[k]);
    if (!t.fs_valid[i]) continue;
    acc += cosine_loss(fs_preds[k], b.next_obs[i]);
    valid += 1;
  }
  return valid > 0 ? acc / valid : 0.0;
}

}  // namespace merl
