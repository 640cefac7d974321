// Independent reference implementations used as test oracles. These are
// deliberately written as straight-line textbook formulas, sharing no code
// with the library paths they check.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "merl/mlp.hpp"

namespace oracles {

// Plain re-evaluation of a dense net: z = W a + b per layer, tanh on hidden
// layers, configured activation on the last.
inline std::vector<double> naive_forward(const merl::Mlp& net, const std::vector<double>& input) {
  std::vector<double> a = input;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto& l = net.layers[li];
    std::vector<double> z(static_cast<std::size_t>(l.w.rows), 0.0);
    for (int r = 0; r < l.w.rows; ++r) {
      double s = l.b[static_cast<std::size_t>(r)];
      for (int c = 0; c < l.w.cols; ++c) s += l.w(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = s;
    }
    const bool last = (li + 1 == net.layers.size());
    const merl::Activation act = last ? net.output : net.hidden;
    for (auto& x : z)
      if (act == merl::Activation::Tanh) x = std::tanh(x);
    a = std::move(z);
  }
  return a;
}

// Coefficient of determination, computed directly from its definition.
// Returns false in `defined` when the total sum of squares is below tol.
struct R2 {
  double value = 0.0;
  bool defined = false;
};

inline R2 r2_score(const std::vector<double>& targets, const std::vector<double>& preds,
                   double tol = 1e-8) {
  if (targets.size() < 2) return {};
  double mean = 0.0;
  for (double t : targets) mean += t;
  mean /= static_cast<double>(targets.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
    ss_res += (targets[i] - preds[i]) * (targets[i] - preds[i]);
  }
  if (ss_tot < tol) return {};
  return {1.0 - ss_res / ss_tot, true};
}

// GAE as the literal double sum A_t = sum_l (gamma*lambda)^l delta_{t+l},
// truncated at the first episode end at or after t.
inline std::vector<double> gae_double_sum(const std::vector<double>& rewards,
                                          const std::vector<double>& values,
                                          const std::vector<double>& next_values,
                                          const std::vector<unsigned char>& terminal,
                                          const std::vector<unsigned char>& episode_end,
                                          double gamma, double lambda) {
  const std::size_t n = rewards.size();
  std::vector<double> delta(n), adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double bootstrap = terminal[t] ? 0.0 : next_values[t];
    delta[t] = rewards[t] + gamma * bootstrap - values[t];
  }
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0, w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      acc += w * delta[l];
      if (episode_end[l]) break;
      w *= gamma * lambda;
    }
    adv[t] = acc;
  }
  return adv;
}

// Diagonal Gaussian log density from the closed form.
inline double gaussian_log_density(const std::vector<double>& x, const std::vector<double>& mean,
                                   const std::vector<double>& log_std) {
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sd = std::exp(log_std[i]);
    const double z = (x[i] - mean[i]) / sd;
    lp += -0.5 * z * z - log_std[i] - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

// Categorical log mass via explicit normalization.
inline double categorical_log_mass(const std::vector<double>& logits, int action) {
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return logits[static_cast<std::size_t>(action)] - mx - std::log(z);
}

// PPO clipped term for one transition, straight from the definition.
inline double ppo_term(double new_lp, double old_lp, double adv, double eps) {
  const double ratio = std::exp(new_lp - old_lp);
  const double clipped = adv >= 0.0 ? (1.0 + eps) * adv : (1.0 - eps) * adv;
  return std::min(ratio * adv, clipped);
}

}  // namespace oracles
