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

// Value density imitation: a critic Q(s, a; s_bar) over demonstration states,
// trained toward max(F(s_bar | s, a), gamma Q'), and an actor pushed toward
// demonstration states in proportion to how rarely the agent visits them.

#include "vdlab/agent.hpp"

#include <memory>
#include <vector>

namespace vdl {

struct WeightConfig {
  double bound = 5.0;  // upper bound B on a normalized demo weight
  void validate() const;
};

// w_i proportional to 1 / d(s_i): normalized to mean 1, clipped at B and
// renormalized once. Entries with a non-finite density get the largest finite
// weight; when none is finite the weights are uniform and `fallback` is set.
Vec demo_weights(const Vec& log_density, const WeightConfig& wc, bool* fallback = nullptr);

struct VdiConfig {
  double gamma = 0.98;
  int truncation = 4;
  double lambda = 0.0;
  double spatial_sigma = 0.1;
  double explore_sigma = 0.2;
  double action_l2 = 0.0;  // penalty on squared actor outputs
  int target_sync = 50;
  int batch = 128;
  std::vector<int> actor_hidden = {64, 64};
  std::vector<int> critic_hidden = {64, 64};
  std::vector<int> flow_hidden = {64, 64};
  int flow_layers = 5;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double flow_lr = 1e-4;
  double flow_l2 = 1e-5;
  std::size_t long_capacity = 100000;
  std::size_t short_capacity = 4000;
  int updates_per_iteration = 32;
  int density_updates_per_iteration = 16;
  int warmup_episodes = 2;
  bool augment_prev_action = false;
  bool inverse_density = true;  // false: uniform demo goals for the actor too
  WeightConfig weights;

  void validate() const;
  double gamma_eff(int goal_dim) const { return std::pow(gamma, 1.0 / goal_dim); }
  double density_cap() const { return 10.0 / (1.0 - gamma); }
};

struct VdiNets {
  int state_dim = 0;
  int action_dim = 0;
  int goal_dim = 0;                 // state, or [prev action, state]
  Mlp actor;                        // s -> a, tanh
  Mlp critic1, critic2;             // [s, a, s_bar] -> Q
  Mlp actor_target, critic1_target, critic2_target;
  Flow future, future_target;       // F(s_bar | s, a)
  Flow state_density, state_density_target;  // d(s_bar)

  static VdiNets make(int state_dim, int action_dim, int goal_dim, const VdiConfig& cfg, Rng& rng);
};

struct VdiBatch {
  Mat s, a, s2, goal;  // normalized, one column per sample
};

// lambda gamma_eff q_t + (1 - lambda) max(f, gamma_eff q_t) with f the
// averaged-logit density of the demo goal under F(. | s, a) and q_t the twin
// target minimum at (s2, mu'(s2)). No reward term.
Vec vdi_target(const VdiNets& nets, const VdiConfig& cfg, const VdiBatch& b, double goal_log_jacobian,
               TargetStats* stats = nullptr);

double vdi_critic_update(VdiNets& nets, const VdiBatch& b, const Vec& targets, AdamState& opt1,
                         AdamState& opt2);

// Gradient of -mean(w * Q1(s, mu(s), goal)) + action_l2 * mean(|mu(s)|^2)
// for the actor, accumulated into `grads`. Empty weights mean 1.
double vdi_actor_loss_and_grad(const VdiNets& nets, const Mat& s, const Mat& goal, const Vec& weights,
                               Mlp& grads, double action_l2 = 0.0);
double vdi_actor_update(VdiNets& nets, const Mat& s, const Mat& goal, const Vec& weights, AdamState& opt,
                        double action_l2 = 0.0);

bool vdi_target_sync(VdiNets& nets, int period, long step);

// Tabular counterpart of vdi_target iterated to its fixed point:
// Q <- lambda gamma P Q + (1 - lambda) max(F, gamma P Q), elementwise.
// F is (state-action) x goal, P is the (state-action) x (state-action)
// successor matrix under the policy. Throws kNumeric past max_iterations.
Mat vdi_tabular_fixed_point(const Mat& F, const Mat& P, double gamma, double lambda,
                            int max_iterations = 100000, double tolerance = 1e-13);

// Rollout quality against raw demo positions.
double mean_nearest_distance(const std::vector<Vec>& positions, const std::vector<Vec>& demo_positions);
// sum_i min(p_i, 1/n): p_i is the fraction of positions whose nearest demo is
// i and lies within `radius`. Equals 1 for equal visitation of every demo.
double demo_coverage(const std::vector<Vec>& positions, const std::vector<Vec>& demo_positions,
                     double radius);

struct ImitationScore {
  double nearest_demo_distance = 0.0;
  double waypoint_completion = 0.0;
  double coverage = 0.0;
};

// Point-mass imitation from demonstration states only.
class VdiAgent {
 public:
  VdiAgent(const PointMassConfig& env, DemoSet demos, const VdiConfig& cfg, std::uint64_t seed);

  struct Metrics {
    long iteration = 0;
    long env_steps = 0;
    double critic_loss = 0.0;
    double actor_objective = 0.0;
    double future_nll = 0.0;
    double state_nll = 0.0;
    int density_fallbacks = 0;
    double max_weight = 0.0;
    bool learned = false;
  };

  Metrics iterate();

  // Greedy rollouts, scored against the demo positions.
  ImitationScore evaluate(int n_episodes, Rng& rng) const;
  std::vector<Vec> rollout(Rng& rng) const;

  Vec policy(const Vec& state) const;
  // Current actor weights over the demos (uniform when inverse density is off).
  Vec demo_weight_vector() const;

  const VdiConfig& config() const { return cfg_; }
  const PointMassConfig& env_config() const { return env_.config(); }
  const DemoSet& demos() const { return demos_; }
  std::vector<Vec> demo_positions() const;
  VdiNets& nets() { return nets_; }
  const VdiNets& nets() const { return nets_; }
  const Ranges& state_ranges() const { return state_ranges_; }
  const Ranges& goal_ranges() const { return goal_ranges_; }
  long iterations() const { return iteration_; }
  long env_steps() const { return env_steps_; }

 private:
  Episode collect(bool random_actions);
  Vec goal_features(const Vec& prev_action, const Vec& state) const;
  double fit_future();
  double fit_state_density();
  Vec norm_state(const Vec& s) const { return normalize_state(s, state_ranges_); }

  PointMassEnv env_;
  DemoSet demos_;
  VdiConfig cfg_;
  Rng rng_;
  VdiNets nets_;
  Mat demo_goals_;  // normalized, one column per demo
  AdamState actor_opt_, critic1_opt_, critic2_opt_, future_opt_, state_opt_;
  ReplayBuffer long_buf_, short_buf_;
  Ranges state_ranges_, goal_ranges_;
  double goal_log_jac_ = 0.0;
  long iteration_ = 0;
  long env_steps_ = 0;
  long updates_ = 0;
};

}  // namespace vdl
