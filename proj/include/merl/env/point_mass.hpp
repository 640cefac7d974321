#pragma once

#include "merl/env/base.hpp"
#include "merl/rng.hpp"

namespace merl::env {

// Continuous 2-D point mass with bounded force actions and a dense
// negative-distance reward.
//
// State: position p in [-2, 2]^2, velocity v (clamped to [-3, 3]^2).
// Action: force f in [-1, 1]^2 (clipped at the boundary, not an error).
// Dynamics (explicit Euler, dt = 0.1):
//   v <- v + dt * (accel_gain * f - drag * v), then clamp
//   p <- p + dt * v; hitting a position wall clamps p and zeroes that
//   velocity component.
// Reward: -|p - goal| evaluated at the post-step position; goal = (0, 0).
// Episodes: spawn position uniform in [-1.5, 1.5]^2 re-drawn until at least
// 0.5 from the goal, velocity zero; time limit 200 steps (truncation, never
// terminal).
//
// Solvable threshold: a scripted PD controller (see pd_controller below)
// averages about -10 return over the spawn distribution; random Gaussian
// actions average below -300. The documented threshold for "solved" is four
// times the controller return, rounded to -40: comfortably separated from
// random behavior yet reachable without fine-tuned control.
class PointMass2D final : public Env {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kDrag = 0.5;
  static constexpr double kAccelGain = 2.0;
  static constexpr double kPosLimit = 2.0;
  static constexpr double kVelLimit = 3.0;
  static constexpr double kSpawnHalf = 1.5;
  static constexpr double kSpawnMinDist = 0.5;
  static constexpr int kMaxSteps = 200;
  static constexpr double kSolvedThreshold = -40.0;

  // overridable: dt, drag, accel_gain, max_steps
  explicit PointMass2D(EnvOverrides overrides = {}) {
    dt_ = detail::take(overrides, "dt", kDt);
    drag_ = detail::take(overrides, "drag", kDrag);
    accel_gain_ = detail::take(overrides, "accel_gain", kAccelGain);
    max_steps_ = static_cast<int>(detail::take(overrides, "max_steps", kMaxSteps));
    detail::expect_consumed(overrides, id());
  }

  Vec reset(std::uint64_t seed) override {
    Rng rng(seed);
    do {
      px_ = rng.uniform(-kSpawnHalf, kSpawnHalf);
      py_ = rng.uniform(-kSpawnHalf, kSpawnHalf);
    } while (std::sqrt(px_ * px_ + py_ * py_) < kSpawnMinDist);
    vx_ = vy_ = 0.0;
    steps_ = 0;
    done_ = false;
    return observe();
  }

  StepResult step(const Action& action) override {
    if (done_) throw UsageError("PointMass2D: step after episode end");
    const Vec f = clip_action(action_spec(), action.continuous);

    vx_ = std::clamp(vx_ + dt_ * (accel_gain_ * f[0] - drag_ * vx_), -kVelLimit, kVelLimit);
    vy_ = std::clamp(vy_ + dt_ * (accel_gain_ * f[1] - drag_ * vy_), -kVelLimit, kVelLimit);
    px_ += dt_ * vx_;
    py_ += dt_ * vy_;
    if (px_ < -kPosLimit || px_ > kPosLimit) {
      px_ = std::clamp(px_, -kPosLimit, kPosLimit);
      vx_ = 0.0;
    }
    if (py_ < -kPosLimit || py_ > kPosLimit) {
      py_ = std::clamp(py_, -kPosLimit, kPosLimit);
      vy_ = 0.0;
    }

    steps_ += 1;
    StepResult r;
    r.reward = -std::sqrt(px_ * px_ + py_ * py_);
    r.truncated = steps_ >= max_steps_;
    r.observation = observe();
    done_ = r.terminal || r.truncated;
    return r;
  }

  ObservationSpec observation_spec() const override {
    return {4,
            {{-kPosLimit, kPosLimit},
             {-kPosLimit, kPosLimit},
             {-kVelLimit, kVelLimit},
             {-kVelLimit, kVelLimit}}};
  }

  ActionSpec action_spec() const override {
    ActionSpec s;
    s.kind = ActionSpec::Kind::Continuous;
    s.dim = 2;
    s.low = {-1.0, -1.0};
    s.high = {1.0, 1.0};
    return s;
  }

  int max_episode_length() const override { return max_steps_; }
  std::string id() const override { return "point_mass"; }

  // Scripted reference controller used to derive the solvable threshold.
  static Vec pd_controller(const Vec& obs) {
    const double kp = 2.0, kd = 1.2;
    return {std::clamp(-kp * obs[0] - kd * obs[2], -1.0, 1.0),
            std::clamp(-kp * obs[1] - kd * obs[3], -1.0, 1.0)};
  }

 private:
  Vec observe() const { return {px_, py_, vx_, vy_}; }

  double dt_ = kDt, drag_ = kDrag, accel_gain_ = kAccelGain;
  int max_steps_ = kMaxSteps;
  double px_ = 0, py_ = 0, vx_ = 0, vy_ = 0;
  int steps_ = 0;
  bool done_ = false;
};

}  // namespace merl::env
