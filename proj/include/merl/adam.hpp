#pragma once

#include <cmath>
#include <string>

#include "merl/common.hpp"
#include "merl/mlp.hpp"

namespace merl {

// Bias-corrected adaptive-moment optimizer state for one network.
struct AdamState {
  std::vector<DenseLayer> m;  // first-moment accumulators
  std::vector<DenseLayer> v;  // second-moment accumulators
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double numerical_eps = 1e-8;
};

inline AdamState make_adam_state(const Mlp& net, double beta1 = 0.9, double beta2 = 0.999,
                                 double numerical_eps = 1e-8) {
  AdamState st;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.numerical_eps = numerical_eps;
  const MlpGrads z = zero_grads_like(net);
  st.m = z.layers;
  st.v = z.layers;
  return st;
}

namespace detail {
inline void adam_scalar(double& p, double g, double& m, double& v, double lr, double c1,
                        double c2, double b1, double b2, double eps) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g * g;
  p -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
}
}  // namespace detail

inline void adam_step(Mlp& params, const MlpGrads& grads, AdamState& st, double lr) {
  if (!same_shape(params, grads)) throw UsageError("adam_step: grads not shape-congruent");
  if (st.m.size() != params.layers.size())
    throw UsageError("adam_step: optimizer state not shape-congruent");

  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const DenseLayer& g = grads.layers[li];
    for (std::size_t k = 0; k < g.w.data.size(); ++k) {
      if (!std::isfinite(g.w.data[k]))
        throw NumericalError("adam_step: non-finite gradient at layer " + std::to_string(li) +
                             " weight index " + std::to_string(k));
    }
    for (std::size_t k = 0; k < g.b.size(); ++k) {
      if (!std::isfinite(g.b[k]))
        throw NumericalError("adam_step: non-finite gradient at layer " + std::to_string(li) +
                             " bias index " + std::to_string(k));
    }
  }

  st.step += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    DenseLayer& pl = params.layers[li];
    const DenseLayer& gl = grads.layers[li];
    DenseLayer& ml = st.m[li];
    DenseLayer& vl = st.v[li];
    for (std::size_t k = 0; k < pl.w.data.size(); ++k)
      detail::adam_scalar(pl.w.data[k], gl.w.data[k], ml.w.data[k], vl.w.data[k], lr, c1, c2,
                          st.beta1, st.beta2, st.numerical_eps);
    for (std::size_t k = 0; k < pl.b.size(); ++k)
      detail::adam_scalar(pl.b[k], gl.b[k], ml.b[k], vl.b[k], lr, c1, c2, st.beta1, st.beta2,
                          st.numerical_eps);
  }
}

// Flat-vector variant, used for the policy's state-independent log-std.
struct AdamVecState {
  Vec m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double numerical_eps = 1e-8;
};

inline AdamVecState make_adam_vec_state(std::size_t n, double beta1 = 0.9, double beta2 = 0.999,
                                        double numerical_eps = 1e-8) {
  AdamVecState st;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.numerical_eps = numerical_eps;
  st.m.assign(n, 0.0);
  st.v.assign(n, 0.0);
  return st;
}

inline void adam_step_vec(Vec& params, const Vec& grads, AdamVecState& st, double lr) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw UsageError("adam_step_vec: shape mismatch");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!std::isfinite(grads[k]))
      throw NumericalError("adam_step_vec: non-finite gradient at index " + std::to_string(k));
  }
  st.step += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k)
    detail::adam_scalar(params[k], grads[k], st.m[k], st.v[k], lr, c1, c2, st.beta1, st.beta2,
                        st.numerical_eps);
}

}  // namespace merl
