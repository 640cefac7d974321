#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "merl/common.hpp"

namespace merl::env {

// Named numeric constants an environment accepts at construction; unknown
// keys are a configuration error. Defaults are documented per env.
using EnvOverrides = std::map<std::string, double>;

namespace detail {
// Pops `key` from the override set, returning its value or the default.
inline double take(EnvOverrides& o, const std::string& key, double fallback) {
  const auto it = o.find(key);
  if (it == o.end()) return fallback;
  const double v = it->second;
  o.erase(it);
  return v;
}

inline void expect_consumed(const EnvOverrides& o, const std::string& env_id) {
  if (!o.empty())
    throw ConfigError("unknown override '" + o.begin()->first + "' for environment " + env_id);
}
}  // namespace detail

struct ObservationSpec {
  int dim = 0;
  // nominal per-dimension ranges; used for fixed observation scaling
  std::vector<std::pair<double, double>> range;
};

struct ActionSpec {
  enum class Kind { Continuous, Discrete };
  Kind kind = Kind::Continuous;
  int dim = 0;       // continuous action dimension
  Vec low, high;     // continuous bounds, finite, low < high per dim
  int n = 0;         // discrete action count, >= 2

  bool operator==(const ActionSpec& o) const {
    return kind == o.kind && dim == o.dim && low == o.low && high == o.high && n == o.n;
  }
};

struct StepResult {
  Vec observation;
  double reward = 0.0;
  bool terminal = false;   // ended by environment rule: no bootstrap
  bool truncated = false;  // ended by time limit: bootstrap from next state
};

struct Action {
  Vec continuous;
  int discrete = -1;
};

// Deterministic, seedable single-instance environment. reset(seed) fully
// re-initializes state from the seed; identical (seed, action sequence)
// pairs produce identical StepResult sequences bit for bit.
class Env {
 public:
  virtual ~Env() = default;

  virtual Vec reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Action& action) = 0;

  virtual ObservationSpec observation_spec() const = 0;
  virtual ActionSpec action_spec() const = 0;
  virtual int max_episode_length() const = 0;
  virtual std::string id() const = 0;
};

using EnvFactory = std::function<std::unique_ptr<Env>()>;

inline Vec clip_action(const ActionSpec& spec, const Vec& a) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = std::clamp(a[i], spec.low[i], spec.high[i]);
  return out;
}

}  // namespace merl::env
