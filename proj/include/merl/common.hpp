#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace merl {

using Vec = std::vector<double>;

// Bad network/config wiring (dimension mismatches, invalid settings).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse (stale cache, stepping a finished episode, out-of-range action).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> v) {
  return std::sqrt(dot(v, v));
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace merl
