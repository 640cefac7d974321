#pragma once

#include "merl/env/base.hpp"
#include "merl/rng.hpp"

namespace merl::env {

// 1-D underpowered car in a valley; reward only at the goal.
//
// State: position in [-1.2, 0.6], velocity in [-0.07, 0.07].
// Action: engine command a in [-1, 1] (clipped).
// Dynamics per tick:
//   v <- clamp(v + power * a - 0.0025 * cos(3 * pos), +/-0.07)
//   pos <- clamp(pos + v); hitting the left wall with negative velocity
//   zeroes the velocity.
// The engine (power = 0.0024) is weaker than the slope term (0.0025), so
// the car cannot drive straight up the steepest grade and must rock back
// and forth to build momentum. power sits above the classic 0.0015 so that
// undirected exploration reaches the goal in roughly 5% of episodes at desk
// scale, keeping the sparse reward discoverable within the 500-step limit.
// Reward: 0 every step until pos >= 0.5, then +100 and terminal.
// Spawn: pos uniform in [-0.6, -0.4], velocity 0. Time limit 500 steps.
class SparseCar final : public Env {
 public:
  static constexpr double kPower = 0.0024;
  static constexpr double kGravity = 0.0025;
  static constexpr double kMinPos = -1.2;
  static constexpr double kMaxPos = 0.6;
  static constexpr double kMaxVel = 0.07;
  static constexpr double kGoalPos = 0.5;
  static constexpr double kGoalReward = 100.0;
  static constexpr int kMaxSteps = 500;

  // overridable: power, gravity, max_steps
  explicit SparseCar(EnvOverrides overrides = {}) {
    power_ = detail::take(overrides, "power", kPower);
    gravity_ = detail::take(overrides, "gravity", kGravity);
    max_steps_ = static_cast<int>(detail::take(overrides, "max_steps", kMaxSteps));
    detail::expect_consumed(overrides, id());
  }

  Vec reset(std::uint64_t seed) override {
    Rng rng(seed);
    pos_ = rng.uniform(-0.6, -0.4);
    vel_ = 0.0;
    steps_ = 0;
    done_ = false;
    return observe();
  }

  StepResult step(const Action& action) override {
    if (done_) throw UsageError("SparseCar: step after episode end");
    const Vec a = clip_action(action_spec(), action.continuous);

    vel_ = std::clamp(vel_ + power_ * a[0] - gravity_ * std::cos(3.0 * pos_), -kMaxVel, kMaxVel);
    pos_ += vel_;
    if (pos_ < kMinPos) {
      pos_ = kMinPos;
      if (vel_ < 0.0) vel_ = 0.0;
    }
    if (pos_ > kMaxPos) pos_ = kMaxPos;

    steps_ += 1;
    StepResult r;
    r.terminal = pos_ >= kGoalPos;
    r.reward = r.terminal ? kGoalReward : 0.0;
    r.truncated = !r.terminal && steps_ >= max_steps_;
    r.observation = observe();
    done_ = r.terminal || r.truncated;
    return r;
  }

  ObservationSpec observation_spec() const override {
    return {2, {{kMinPos, kMaxPos}, {-kMaxVel, kMaxVel}}};
  }

  ActionSpec action_spec() const override {
    ActionSpec s;
    s.kind = ActionSpec::Kind::Continuous;
    s.dim = 1;
    s.low = {-1.0};
    s.high = {1.0};
    return s;
  }

  int max_episode_length() const override { return max_steps_; }
  std::string id() const override { return "sparse_car"; }

 private:
  Vec observe() const { return {pos_, vel_}; }

  double power_ = kPower, gravity_ = kGravity;
  int max_steps_ = kMaxSteps;
  double pos_ = 0, vel_ = 0;
  int steps_ = 0;
  bool done_ = false;
};

}  // namespace merl::env
