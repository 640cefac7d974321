#pragma once

#include <array>

#include "merl/env/base.hpp"

namespace merl::env {

// A pair of four-room gridworld tasks sharing one observation layout and
// one 5-action space, so a policy can be moved between them unchanged.
//
// Grid: 9x9, border walls plus inner walls at column 4 (gaps at rows 2, 6)
// and row 4 (gaps at columns 2, 6). The agent always spawns at (1, 1).
//
// Observation (S = 20, all entries in [0, 1]):
//   [0..8]   3x3 local wall view, row-major, centered on the agent
//   [9..17]  3x3 local object view (pellets in variant A, the goal door in
//            variant B)
//   [18,19]  row / 8, col / 8
//
// Actions: 0 = up, 1 = down, 2 = left, 3 = right, 4 = stay. Moving into a
// wall leaves the position unchanged (reward 0).
//
// Variant A (pellets): +1 for entering a pellet cell (pellet disappears);
// terminal when all pellets are collected.
// Variant B (door): +10 for reaching the goal door at (7, 7); terminal.
// Both variants: 0 reward otherwise, 100-step time limit.
class GridRooms final : public Env {
 public:
  enum class Variant { Pellets, Door };

  static constexpr int kSize = 9;
  static constexpr int kMaxSteps = 100;
  static constexpr int kSpawnRow = 1, kSpawnCol = 1;
  static constexpr double kPelletReward = 1.0;
  static constexpr double kDoorReward = 10.0;

  // overridable: max_steps
  explicit GridRooms(Variant variant, EnvOverrides overrides = {}) : variant_(variant) {
    max_steps_ = static_cast<int>(detail::take(overrides, "max_steps", kMaxSteps));
    detail::expect_consumed(overrides, id());
  }

  Vec reset(std::uint64_t /*seed*/) override {
    // layout and spawn are fixed per variant; the seed has no effect
    row_ = kSpawnRow;
    col_ = kSpawnCol;
    steps_ = 0;
    done_ = false;
    pellets_ = kPelletCells;
    return observe();
  }

  StepResult step(const Action& action) override {
    if (done_) throw UsageError("GridRooms: step after episode end");
    const int a = action.discrete;
    if (a < 0 || a >= 5) throw UsageError("GridRooms: discrete action out of range");

    static constexpr int dr[5] = {-1, 1, 0, 0, 0};
    static constexpr int dc[5] = {0, 0, -1, 1, 0};
    const int nr = row_ + dr[a], nc = col_ + dc[a];
    if (!is_wall(nr, nc)) {
      row_ = nr;
      col_ = nc;
    }

    StepResult r;
    if (variant_ == Variant::Pellets) {
      for (auto& cell : pellets_) {
        if (cell.first == row_ && cell.second == col_) {
          r.reward += kPelletReward;
          cell = {-1, -1};  // consumed
        }
      }
      bool any_left = false;
      for (const auto& cell : pellets_) any_left |= cell.first >= 0;
      r.terminal = !any_left;
    } else {
      if (row_ == kGoalCell.first && col_ == kGoalCell.second) {
        r.reward = kDoorReward;
        r.terminal = true;
      }
    }

    steps_ += 1;
    r.truncated = !r.terminal && steps_ >= max_steps_;
    r.observation = observe();
    done_ = r.terminal || r.truncated;
    return r;
  }

  ObservationSpec observation_spec() const override {
    ObservationSpec s;
    s.dim = 20;
    s.range.assign(20, {0.0, 1.0});
    return s;
  }

  ActionSpec action_spec() const override {
    ActionSpec s;
    s.kind = ActionSpec::Kind::Discrete;
    s.n = 5;
    return s;
  }

  int max_episode_length() const override { return max_steps_; }
  std::string id() const override {
    return variant_ == Variant::Pellets ? "grid_rooms_a" : "grid_rooms_b";
  }

  std::pair<int, int> position() const { return {row_, col_}; }

  static bool is_wall(int r, int c) {
    if (r < 0 || r >= kSize || c < 0 || c >= kSize) return true;
    if (r == 0 || r == kSize - 1 || c == 0 || c == kSize - 1) return true;
    if (c == 4 && r != 2 && r != 6) return true;
    if (r == 4 && c != 2 && c != 6) return true;
    return false;
  }

 private:
  static constexpr std::array<std::pair<int, int>, 6> kPelletCells = {
      {{1, 7}, {7, 1}, {7, 7}, {3, 3}, {5, 5}, {1, 3}}};
  static constexpr std::pair<int, int> kGoalCell = {7, 7};

  bool has_object(int r, int c) const {
    if (variant_ == Variant::Pellets) {
      for (const auto& cell : pellets_)
        if (cell.first == r && cell.second == c) return true;
      return false;
    }
    return r == kGoalCell.first && c == kGoalCell.second;
  }

  Vec observe() const {
    Vec obs(20, 0.0);
    int k = 0;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) obs[static_cast<std::size_t>(k++)] = is_wall(row_ + dr, col_ + dc) ? 1.0 : 0.0;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) obs[static_cast<std::size_t>(k++)] = has_object(row_ + dr, col_ + dc) ? 1.0 : 0.0;
    obs[18] = static_cast<double>(row_) / (kSize - 1);
    obs[19] = static_cast<double>(col_) / (kSize - 1);
    return obs;
  }

  Variant variant_;
  int max_steps_ = kMaxSteps;
  int row_ = kSpawnRow, col_ = kSpawnCol;
  int steps_ = 0;
  bool done_ = false;
  std::array<std::pair<int, int>, 6> pellets_ = kPelletCells;
};

}  // namespace merl::env
