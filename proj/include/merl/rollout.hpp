#pragma once

#include <functional>
#include <memory>

#include "merl/agent.hpp"
#include "merl/env/base.hpp"

namespace merl {

// Everything gathered over one horizon across all actors, laid out
// actor-major: index(actor, t) = actor * horizon + t. Episode structure is
// carried by the terminal/truncated flags; the GAE recursion and the
// segmenter never cross actor boundaries.
struct RolloutBatch {
  int num_actors = 0;
  int horizon = 0;
  int obs_dim = 0;

  std::vector<Vec> obs;            // s_t
  std::vector<Vec> next_obs;       // s_{t+1} actually observed (FS target)
  std::vector<env::Action> actions;
  Vec old_log_probs;               // log pi_theta_k(a_t | s_t), frozen
  Vec rewards;
  Vec values;                      // V_phi_k(s_t), recorded at collection
  Vec next_values;                 // V_phi_k(s_{t+1}); 0 on terminal steps
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> truncated;

  // derived before the update
  Vec advantages;         // GAE
  Vec returns;            // advantages + values
  Vec policy_advantages;  // advantages, normalized when enabled

  double mean_entropy = 0.0;

  int size() const { return num_actors * horizon; }
  int index(int actor, int t) const { return actor * horizon + t; }
  bool episode_end(int i) const { return terminal[static_cast<std::size_t>(i)] || truncated[static_cast<std::size_t>(i)]; }
};

// GAE backward recursion with episode-boundary resets:
//   delta_t = r_t + gamma * next_value_t * (1 - terminal_t) - V(s_t)
//   A_t     = delta_t + gamma * lambda * (1 - episode_end_t) * A_{t+1}
// next_value_t is the collection-time value of the observed next state, so
// truncated episodes and the horizon tail bootstrap while terminal steps do
// not.
inline void compute_gae(RolloutBatch& b, double gamma, double lambda) {
  const int n = b.size();
  b.advantages.assign(static_cast<std::size_t>(n), 0.0);
  for (int actor = 0; actor < b.num_actors; ++actor) {
    double carry = 0.0;
    for (int t = b.horizon - 1; t >= 0; --t) {
      const int i = b.index(actor, t);
      const std::size_t ui = static_cast<std::size_t>(i);
      const double bootstrap = b.terminal[ui] ? 0.0 : b.next_values[ui];
      const double delta = b.rewards[ui] + gamma * bootstrap - b.values[ui];
      carry = delta + gamma * lambda * (b.episode_end(i) ? 0.0 : carry);
      b.advantages[ui] = carry;
    }
  }
}

// R_hat_t = A_t + V_phi_k(s_t); keeps the regression target consistent with
// the advantage estimator.
inline void compute_returns(RolloutBatch& b) {
  if (b.advantages.size() != static_cast<std::size_t>(b.size()))
    throw UsageError("compute_returns: advantages not computed");
  b.returns.resize(b.advantages.size());
  for (std::size_t i = 0; i < b.advantages.size(); ++i)
    b.returns[i] = b.advantages[i] + b.values[i];
}

// Zero-mean unit-variance normalization over the whole update batch. The
// divisor is the population standard deviation with a degeneracy threshold
// rather than an additive epsilon, so non-degenerate batches come out with
// variance exactly 1 up to rounding.
inline void normalize_advantages(RolloutBatch& b, bool enabled) {
  b.policy_advantages = b.advantages;
  if (!enabled) return;
  const double m = mean_of(b.policy_advantages);
  double var = 0.0;
  for (double a : b.policy_advantages) var += (a - m) * (a - m);
  var /= static_cast<double>(b.policy_advantages.size());
  const double sd = std::sqrt(var);
  if (sd < 1e-12) return;  // degenerate batch left unnormalized
  for (double& a : b.policy_advantages) a = (a - m) / sd;
}

// Stateful collector: episodes persist across rollouts, each actor owns an
// independent deterministic stream, and transitions land in fixed actor
// order.
class RolloutCollector {
 public:
  RolloutCollector(env::EnvFactory factory, int num_actors, std::uint64_t seed)
      : factory_(std::move(factory)), seed_(seed) {
    if (num_actors < 1) throw ConfigError("RolloutCollector: need at least one actor");
    for (int a = 0; a < num_actors; ++a) {
      ActorState st{factory_(), Rng(Rng::mix(seed, 0x1000 + static_cast<std::uint64_t>(a))),
                    Rng::mix(seed, 0x2000 + static_cast<std::uint64_t>(a))};
      actors_.push_back(std::move(st));
    }
    reset_all_actors();
  }

  // Swaps every actor into a new environment mid-training. Parameters and
  // optimizer state are untouched by construction; actors simply begin a
  // fresh episode of the new task.
  void switch_env(env::EnvFactory factory) {
    const auto old_spec = actors_.front().env->observation_spec();
    const auto old_act = actors_.front().env->action_spec();
    factory_ = std::move(factory);
    auto probe = factory_();
    if (probe->observation_spec().dim != old_spec.dim || !(probe->action_spec() == old_act))
      throw ConfigError("switch_env: observation/action specs are incompatible");
    for (auto& a : actors_) {
      a.env = factory_();
      a.episode_count += 1;
      a.obs = a.env->reset(Rng::mix(a.episode_seed_root, static_cast<std::uint64_t>(a.episode_count)));
      a.ep_return = 0.0;
    }
  }

  RolloutBatch collect(const AgentParams& params, int horizon) {
    RolloutBatch b;
    b.num_actors = static_cast<int>(actors_.size());
    b.horizon = horizon;
    b.obs_dim = actors_.front().env->observation_spec().dim;
    const int n = b.size();
    b.obs.resize(static_cast<std::size_t>(n));
    b.next_obs.resize(static_cast<std::size_t>(n));
    b.actions.resize(static_cast<std::size_t>(n));
    b.old_log_probs.assign(static_cast<std::size_t>(n), 0.0);
    b.rewards.assign(static_cast<std::size_t>(n), 0.0);
    b.values.assign(static_cast<std::size_t>(n), 0.0);
    b.next_values.assign(static_cast<std::size_t>(n), 0.0);
    b.terminal.assign(static_cast<std::size_t>(n), 0);
    b.truncated.assign(static_cast<std::size_t>(n), 0);

    double entropy_acc = 0.0;
    for (std::size_t ai = 0; ai < actors_.size(); ++ai) {
      ActorState& actor = actors_[ai];
      int pending = -1;  // index waiting for V(s_{t+1}) from the next step
      for (int t = 0; t < horizon; ++t) {
        const int i = b.index(static_cast<int>(ai), t);
        const std::size_t ui = static_cast<std::size_t>(i);

        const auto pe = eval_policy(params, actor.obs);
        const double v = eval_value(params, actor.obs);
        if (pending >= 0) b.next_values[static_cast<std::size_t>(pending)] = v;
        entropy_acc += entropy(pe.dist);
        const auto sample = sample_action(pe.dist, actor.rng);

        env::StepResult sr;
        try {
          sr = actor.env->step(sample.action);
        } catch (const std::exception& e) {
          throw UsageError("actor " + std::to_string(ai) + " env fault: " + e.what());
        }

        b.obs[ui] = actor.obs;
        b.actions[ui] = sample.action;
        b.old_log_probs[ui] = sample.log_prob;
        b.rewards[ui] = sr.reward;
        b.values[ui] = v;
        b.terminal[ui] = sr.terminal ? 1 : 0;
        b.truncated[ui] = sr.truncated ? 1 : 0;
        b.next_obs[ui] = sr.observation;

        actor.ep_return += sr.reward;
        if (sr.terminal || sr.truncated) {
          episode_returns_.push_back(actor.ep_return);
          actor.ep_return = 0.0;
          actor.episode_count += 1;
          b.next_values[ui] =
              sr.truncated ? eval_value(params, sr.observation) : 0.0;
          actor.obs = actor.env->reset(
              Rng::mix(actor.episode_seed_root, static_cast<std::uint64_t>(actor.episode_count)));
          pending = -1;
        } else {
          actor.obs = sr.observation;
          pending = i;
        }
      }
      if (pending >= 0)
        b.next_values[static_cast<std::size_t>(pending)] = eval_value(params, actor.obs);
    }
    b.mean_entropy = entropy_acc / static_cast<double>(n);
    return b;
  }

  const std::vector<double>& episode_returns() const { return episode_returns_; }

  // Mean of the most recent `window` completed episode returns.
  double rolling_mean_return(std::size_t window = 100) const {
    if (episode_returns_.empty()) return 0.0;
    const std::size_t n = std::min(window, episode_returns_.size());
    double s = 0.0;
    for (std::size_t i = episode_returns_.size() - n; i < episode_returns_.size(); ++i)
      s += episode_returns_[i];
    return s / static_cast<double>(n);
  }

 private:
  struct ActorState {
    std::unique_ptr<env::Env> env;
    Rng rng;                         // action sampling stream
    std::uint64_t episode_seed_root; // reset seeds derive from this
    long episode_count = 0;
    Vec obs;
    double ep_return = 0.0;
  };

  void reset_all_actors() {
    for (auto& a : actors_) {
      a.obs = a.env->reset(Rng::mix(a.episode_seed_root, static_cast<std::uint64_t>(a.episode_count)));
    }
  }

  env::EnvFactory factory_;
  std::uint64_t seed_;
  std::vector<ActorState> actors_;
  std::vector<double> episode_returns_;
};

}  // namespace merl
