#pragma once

#include <functional>

#include "merl/common.hpp"
#include "merl/mlp.hpp"

namespace merl {

// Central-difference gradient of a scalar loss over every parameter of a
// network: (f(p+h) - f(p-h)) / 2h. Testing oracle for the analytic
// backward passes.
inline MlpGrads finite_difference_gradient(const std::function<double(const Mlp&)>& loss_fn,
                                           const Mlp& params, double h) {
  if (!(h > 0.0)) throw UsageError("finite_difference_gradient: h must be > 0");
  Mlp p = params;
  MlpGrads g = zero_grads_like(params);
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    auto probe = [&](double& x, double& out) {
      const double orig = x;
      x = orig + h;
      const double fp = loss_fn(p);
      x = orig - h;
      const double fm = loss_fn(p);
      x = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericalError("finite_difference_gradient: non-finite loss");
      out = (fp - fm) / (2.0 * h);
    };
    for (std::size_t k = 0; k < p.layers[li].w.data.size(); ++k)
      probe(p.layers[li].w.data[k], g.layers[li].w.data[k]);
    for (std::size_t k = 0; k < p.layers[li].b.size(); ++k)
      probe(p.layers[li].b[k], g.layers[li].b[k]);
  }
  return g;
}

inline Vec finite_difference_gradient_vec(const std::function<double(const Vec&)>& loss_fn,
                                          const Vec& params, double h) {
  if (!(h > 0.0)) throw UsageError("finite_difference_gradient_vec: h must be > 0");
  Vec p = params;
  Vec g(params.size(), 0.0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double orig = p[k];
    p[k] = orig + h;
    const double fp = loss_fn(p);
    p[k] = orig - h;
    const double fm = loss_fn(p);
    p[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("finite_difference_gradient_vec: non-finite loss");
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Relative error with an absolute floor, so near-zero gradient pairs are
// compared absolutely instead of blowing up the ratio.
inline double rel_error(double a, double b, double floor_scale = 1e-6) {
  const double denom = std::max({std::abs(a), std::abs(b), floor_scale});
  return std::abs(a - b) / denom;
}

inline double max_rel_error(const MlpGrads& a, const MlpGrads& b, double floor_scale = 1e-6) {
  double worst = 0.0;
  if (a.layers.size() != b.layers.size())
    throw UsageError("max_rel_error: gradient shapes differ");
  for (std::size_t li = 0; li < a.layers.size(); ++li) {
    for (std::size_t k = 0; k < a.layers[li].w.data.size(); ++k)
      worst = std::max(worst, rel_error(a.layers[li].w.data[k], b.layers[li].w.data[k], floor_scale));
    for (std::size_t k = 0; k < a.layers[li].b.size(); ++k)
      worst = std::max(worst, rel_error(a.layers[li].b[k], b.layers[li].b[k], floor_scale));
  }
  return worst;
}

inline double max_rel_error_vec(const Vec& a, const Vec& b, double floor_scale = 1e-6) {
  if (a.size() != b.size()) throw UsageError("max_rel_error_vec: sizes differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    worst = std::max(worst, rel_error(a[k], b[k], floor_scale));
  return worst;
}

}  // namespace merl
