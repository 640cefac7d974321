#pragma once

#include <numbers>

#include "merl/common.hpp"
#include "merl/env/base.hpp"
#include "merl/rng.hpp"

namespace merl {

// Policy output distribution: diagonal Gaussian with a state-independent
// log standard deviation, or a categorical over logits.
struct PolicyDistribution {
  bool continuous = true;
  Vec mean;     // continuous case
  Vec log_std;  // continuous case
  Vec logits;   // discrete case
};

inline double log_prob(const PolicyDistribution& d, const env::Action& a) {
  if (d.continuous) {
    if (a.continuous.size() != d.mean.size())
      throw UsageError("log_prob: action dimension mismatch");
    double lp = 0.0;
    for (std::size_t i = 0; i < d.mean.size(); ++i) {
      const double inv_sd = std::exp(-d.log_std[i]);
      const double z = (a.continuous[i] - d.mean[i]) * inv_sd;
      lp += -0.5 * z * z - d.log_std[i] - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    return lp;
  }
  if (a.discrete < 0 || a.discrete >= static_cast<int>(d.logits.size()))
    throw UsageError("log_prob: discrete action out of range");
  double mx = d.logits[0];
  for (double l : d.logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : d.logits) z += std::exp(l - mx);
  return d.logits[static_cast<std::size_t>(a.discrete)] - mx - std::log(z);
}

struct ActionSample {
  env::Action action;
  double log_prob = 0.0;
};

// Samples an action and reports its log probability. The log probability is
// computed by the same log_prob() used later for ratios, so the pair is
// exactly consistent.
inline ActionSample sample_action(const PolicyDistribution& d, Rng& rng) {
  ActionSample out;
  if (d.continuous) {
    out.action.continuous.resize(d.mean.size());
    for (std::size_t i = 0; i < d.mean.size(); ++i)
      out.action.continuous[i] = d.mean[i] + std::exp(d.log_std[i]) * rng.normal();
  } else {
    double mx = d.logits[0];
    for (double l : d.logits) mx = std::max(mx, l);
    Vec cumulative(d.logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < d.logits.size(); ++i) {
      z += std::exp(d.logits[i] - mx);
      cumulative[i] = z;
    }
    const double u = rng.uniform() * z;
    int pick = static_cast<int>(d.logits.size()) - 1;
    for (std::size_t i = 0; i < cumulative.size(); ++i) {
      if (u < cumulative[i]) {
        pick = static_cast<int>(i);
        break;
      }
    }
    out.action.discrete = pick;
  }
  out.log_prob = log_prob(d, out.action);
  return out;
}

inline double entropy(const PolicyDistribution& d) {
  if (d.continuous) {
    double h = 0.0;
    for (double ls : d.log_std)
      h += ls + 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
    return h;
  }
  double mx = d.logits[0];
  for (double l : d.logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : d.logits) z += std::exp(l - mx);
  const double log_z = mx + std::log(z);
  double h = 0.0;
  for (double l : d.logits) {
    const double p = std::exp(l - log_z);
    h -= p * (l - log_z);
  }
  return h;
}

// Gradients of log_prob with respect to the distribution parameters.
// Continuous: fills d_mean and d_log_std. Discrete: fills d_logits.
inline void log_prob_param_grads(const PolicyDistribution& d, const env::Action& a,
                                 Vec* d_mean, Vec* d_log_std, Vec* d_logits) {
  if (d.continuous) {
    d_mean->assign(d.mean.size(), 0.0);
    d_log_std->assign(d.mean.size(), 0.0);
    for (std::size_t i = 0; i < d.mean.size(); ++i) {
      const double inv_sd = std::exp(-d.log_std[i]);
      const double z = (a.continuous[i] - d.mean[i]) * inv_sd;
      (*d_mean)[i] = z * inv_sd;        // (a - mu) / sigma^2
      (*d_log_std)[i] = z * z - 1.0;    // ((a - mu)/sigma)^2 - 1
    }
    return;
  }
  double mx = d.logits[0];
  for (double l : d.logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : d.logits) z += std::exp(l - mx);
  d_logits->assign(d.logits.size(), 0.0);
  for (std::size_t i = 0; i < d.logits.size(); ++i) {
    const double softmax = std::exp(d.logits[i] - mx) / z;
    (*d_logits)[i] = (static_cast<int>(i) == a.discrete ? 1.0 : 0.0) - softmax;
  }
}

// Gradient of entropy w.r.t. distribution parameters; only the continuous
// case depends on parameters we train directly (d_entropy/d_log_std = 1).
inline void entropy_param_grads(const PolicyDistribution& d, Vec* d_log_std, Vec* d_logits) {
  if (d.continuous) {
    d_log_std->assign(d.log_std.size(), 1.0);
    return;
  }
  double mx = d.logits[0];
  for (double l : d.logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : d.logits) z += std::exp(l - mx);
  const double log_z = mx + std::log(z);
  // H = -sum_i p_i log p_i, dH/dl_j = -p_j (log p_j + H)... expanded below
  double h = 0.0;
  Vec p(d.logits.size());
  for (std::size_t i = 0; i < d.logits.size(); ++i) {
    p[i] = std::exp(d.logits[i] - log_z);
    h -= p[i] * (d.logits[i] - log_z);
  }
  d_logits->assign(d.logits.size(), 0.0);
  for (std::size_t j = 0; j < d.logits.size(); ++j)
    (*d_logits)[j] = -p[j] * ((d.logits[j] - log_z) + h);
}

}  // namespace merl
