// Copyright 2026 The vdlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Environments: tabular MDPs (cliffwalk), and continuous goal environments
// (noisy slide, point-mass imitation) behind a common interface.

#include "vdlab/numcore.hpp"

#include <array>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace vdl {

// ---------------------------------------------------------------------------
// Tabular MDPs

struct DiscreteMdpSpec {
  int n_states = 0;
  int n_actions = 0;
  int n_goals = 0;
  std::vector<Mat> P;          // P[a](s, s')
  Vec start;                   // d0
  std::vector<int> goal;       // h(s, a) at index s * n_actions + a
  std::vector<bool> absorbing;
  std::vector<std::array<int, 2>> coords;  // optional (x, y) per state

  double prob(int s, int a, int s2) const { return P[static_cast<std::size_t>(a)](s, s2); }
  int h(int s, int a) const { return goal[static_cast<std::size_t>(s * n_actions + a)]; }

  // Throws kInvalidArgument if any row or d0 fails to sum to 1 within 1e-12.
  void validate() const;

  int sample_start(Rng& rng) const;
  int sample_next(int s, int a, Rng& rng) const;
};

enum Move : int { kUp = 0, kRight = 1, kDown = 2, kLeft = 3 };

struct CliffWalkConfig {
  int width = 8;
  int height = 4;
  double slip = 0.2;
  // Cells as (x, y) with y = 0 the bottom row. Empty `cliff` means the
  // interior of the bottom row.
  std::vector<std::array<int, 2>> cliff;
  std::array<int, 2> start = {0, 0};
  std::array<int, 2> goal = {-1, 0};  // x = -1: bottom-right corner
};

// Grid cells come first (index y * width + x); the last state is the
// absorbing failure state reached by entering a cliff cell. h(s, a) is the
// cell of s.
struct CliffWalk {
  CliffWalkConfig cfg;
  DiscreteMdpSpec mdp;
  int start_state = 0;
  int goal_state = 0;
  int fail_state = 0;
  std::vector<bool> is_cliff;

  int cell(int x, int y) const { return y * cfg.width + x; }
  bool is_grid(int s) const { return s < cfg.width * cfg.height; }
};

CliffWalk cliffwalk_build(const CliffWalkConfig& cfg);

// Cells whose orthogonal neighbour is a cliff cell.
std::vector<int> cliff_adjacent_states(const CliffWalk& cw);

// ---------------------------------------------------------------------------
// Continuous goal environments

struct StepResult {
  Vec next_state;
  Vec achieved_goal;   // h(s, a): goal projection of the state the action was taken in
  bool done = false;   // absorbing state reached
  double reward = 0.0; // discrete envs only
};

class GoalEnv {
 public:
  virtual ~GoalEnv() = default;

  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int goal_dim() const = 0;
  virtual int horizon() const = 0;
  virtual bool discrete() const { return false; }
  // Success on first visit to the goal rather than at the final state.
  virtual bool success_on_visit() const { return false; }

  virtual Vec reset(Rng& rng) = 0;
  virtual Vec sample_goal(Rng& rng) const = 0;
  virtual StepResult step(const Vec& action, Rng& rng) = 0;
  virtual Vec achieved_goal(const Vec& state) const = 0;
  virtual bool reached(const Vec& achieved, const Vec& goal) const = 0;
  // Per-dimension bounds used for normalization.
  virtual Mat state_bounds() const = 0;  // state_dim x 2
  virtual Mat goal_bounds() const = 0;   // goal_dim x 2

  virtual std::unique_ptr<GoalEnv> clone() const = 0;
};

// Cliffwalk with a 2D continuous action (the dominant component picks the
// move). States are one-hot-free (x, y) cell coordinates; the failure state
// is (-1, -1). Goals are cell coordinates, so a goal hit is exact equality;
// an episode succeeds once it visits its goal.
class CliffWalkEnv final : public GoalEnv {
 public:
  explicit CliffWalkEnv(const CliffWalkConfig& cfg, int horizon = 40);

  std::string name() const override { return "cliffwalk"; }
  int state_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  int goal_dim() const override { return 2; }
  int horizon() const override { return horizon_; }
  bool discrete() const override { return true; }
  bool success_on_visit() const override { return true; }

  Vec reset(Rng& rng) override;
  Vec sample_goal(Rng& rng) const override;
  StepResult step(const Vec& action, Rng& rng) override;
  Vec achieved_goal(const Vec& state) const override { return state; }
  bool reached(const Vec& achieved, const Vec& goal) const override;
  Mat state_bounds() const override;
  Mat goal_bounds() const override { return state_bounds(); }
  std::unique_ptr<GoalEnv> clone() const override;

  const CliffWalk& world() const { return cw_; }
  Vec coords_of(int s) const;
  int state_of(const Vec& coords) const;
  static int move_of(const Vec& action);

 private:
  CliffWalk cw_;
  int horizon_;
  int state_ = 0;
};

struct SlideConfig {
  double arena = 1.5;            // table is [0, arena]^2
  double friction = 0.7;         // velocity decay per step
  double impulse = 0.09;         // velocity gained per unit executed action
  int actuation_horizon = 2;     // steps during which actions touch the puck
  int horizon = 16;
  double epsilon = 0.05;         // goal-ball radius
  double noise_scale = 1.0;      // multiplier on the action-noise formula
  std::array<double, 2> start = {0.1, 0.1};
  double start_jitter = 0.0;
  // Goals are drawn as start + impulse/(1-friction) * u for u uniform on
  // [goal_lo, goal_hi]^2 (total executed action per component).
  double goal_lo = 0.6;
  double goal_hi = 1.4;
};

// sigma(a) = noise_scale * |max(0, a - 0.5)|^2 / (2e)
double slide_noise_sd(const Vec& action, double noise_scale = 1.0);

// State = [puck x, puck y, vx, vy, t / horizon]; achieved goal = puck position.
class SlideEnv final : public GoalEnv {
 public:
  explicit SlideEnv(const SlideConfig& cfg);

  std::string name() const override { return "slide"; }
  int state_dim() const override { return 5; }
  int action_dim() const override { return 2; }
  int goal_dim() const override { return 2; }
  int horizon() const override { return cfg_.horizon; }

  Vec reset(Rng& rng) override;
  Vec sample_goal(Rng& rng) const override;
  StepResult step(const Vec& action, Rng& rng) override;
  Vec achieved_goal(const Vec& state) const override { return state.head(2); }
  bool reached(const Vec& achieved, const Vec& goal) const override;
  Mat state_bounds() const override;
  Mat goal_bounds() const override;
  std::unique_ptr<GoalEnv> clone() const override;

  const SlideConfig& config() const { return cfg_; }
  void set_state(const Vec& s) { state_ = s; }

 private:
  SlideConfig cfg_;
  Vec state_;
};

StepResult slide_step(const Vec& state, const Vec& action, const SlideConfig& cfg, Rng& rng);

struct PointMassConfig {
  double arena = 1.0;          // positions live in [-arena, arena]^2
  double max_speed = 0.05;     // displacement per step at |a| = 1
  double action_noise = 0.0;
  int horizon = 200;
  double start_jitter = 0.02;
  // Expert: waypoint loop on a circle.
  int n_waypoints = 6;
  double loop_radius = 0.5;
  double expert_speed = 0.025;
  double waypoint_tolerance = 0.1;  // completion radius
  double slow_radius = 0.15;        // expert slows down near waypoints
  double slow_factor = 0.35;
};

// State = position. Action = velocity command in [-1, 1]^2.
class PointMassEnv final : public GoalEnv {
 public:
  explicit PointMassEnv(const PointMassConfig& cfg);

  std::string name() const override { return "pointmass"; }
  int state_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  int goal_dim() const override { return 2; }
  int horizon() const override { return cfg_.horizon; }

  Vec reset(Rng& rng) override;
  Vec sample_goal(Rng& rng) const override;
  StepResult step(const Vec& action, Rng& rng) override;
  Vec achieved_goal(const Vec& state) const override { return state; }
  bool reached(const Vec& achieved, const Vec& goal) const override;
  Mat state_bounds() const override;
  Mat goal_bounds() const override { return state_bounds(); }
  std::unique_ptr<GoalEnv> clone() const override;

  const PointMassConfig& config() const { return cfg_; }
  std::vector<Vec> waypoints() const;

 private:
  PointMassConfig cfg_;
  Vec state_;
};

StepResult pointmass_step(const Vec& state, const Vec& action, const PointMassConfig& cfg, Rng& rng);

struct ExpertTrace {
  std::vector<Vec> states;   // horizon + 1
  std::vector<Vec> actions;  // horizon
  double tracking_error = 0.0;  // mean distance to the current waypoint segment
};

// Scripted waypoint-following controller, started at the first waypoint.
ExpertTrace expert_rollout(const PointMassConfig& cfg, Rng& rng);

// Fraction of waypoints passed within tolerance, in loop order.
double waypoint_completion(const std::vector<Vec>& positions, const PointMassConfig& cfg);

// ---------------------------------------------------------------------------
// Demonstrations and normalization

struct Ranges {
  Vec lo;
  Vec hi;
};

Ranges fit_ranges(const std::vector<Vec>& rollouts, const std::vector<Vec>& demos);
Ranges ranges_from_bounds(const Mat& bounds);
Vec normalize_state(const Vec& raw, const Ranges& r);
Vec denormalize_state(const Vec& norm, const Ranges& r);

struct DemoSet {
  std::vector<std::string> names;  // feature names
  std::vector<Vec> states;         // raw; [prev_action, state] when augmented
  int stride = 1;
  bool augmented = false;
};

DemoSet expert_demos(const PointMassConfig& cfg, int n_trajectories, int stride,
                     bool augment_prev_action, Rng& rng);

void write_demo_csv(std::ostream& os, const DemoSet& demos);
DemoSet read_demo_csv(std::istream& is);

}  // namespace vdl
