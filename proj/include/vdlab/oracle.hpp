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

// Exact tabular computations: discounted goal densities, goal-conditioned Q
// by policy evaluation, hindsight-tilted fixed points, optimal control, and
// sample-based tabular learners that mirror the neural agents.

#include "vdlab/envs.hpp"
#include "vdlab/replay.hpp"

#include <vector>

namespace vdl {

struct TabularPolicy {
  Mat probs;  // n_states x n_actions, rows sum to 1

  static TabularPolicy uniform(int n_states, int n_actions);
  static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions);
  void validate() const;
};

// Row (s * n_actions + a) holds F(. | s, a); columns are goal ids.
using VisitationTable = Mat;

// P_pi over states, and over state-action pairs.
Mat state_kernel(const DiscreteMdpSpec& mdp, const TabularPolicy& pi);
Mat state_action_kernel(const DiscreteMdpSpec& mdp, const TabularPolicy& pi);

// F = (1 - gamma) (I - gamma P_pi)^-1 H via a dense LU solve.
VisitationTable exact_value_density(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma);

// Policy evaluation of r_g(s, a) = (1 - gamma) 1(h(s, a) = g), solved on the
// state space. Returns n_states x n_actions.
Mat exact_goal_q(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma, int g);

// Column g of a VisitationTable reshaped to n_states x n_actions.
Mat density_column(const DiscreteMdpSpec& mdp, const VisitationTable& F, int g);

struct IterationControl {
  double tolerance = 1e-13;
  int max_iterations = 200000;
};

// TD fixed point under p~(s'|s,a,g) ∝ p(s'|s,a) w(s'; g). kFuture weighs by
// the discounted future achievement of g from s' under pi; kFinal by the
// probability that the state `final_horizon` steps after s' achieves g.
Mat her_fixed_point(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma, int g,
                    RelabelStrategy strategy = RelabelStrategy::kFuture, int final_horizon = 100,
                    const IterationControl& ctl = {});

struct OptimalControl {
  Mat q;                     // n_states x n_actions
  std::vector<int> policy;   // greedy, lowest action index on ties
};

OptimalControl value_iteration(const DiscreteMdpSpec& mdp, double gamma, int g,
                               const IterationControl& ctl = {});

// Actions within `tol` of the row maximum.
std::vector<int> greedy_set(const Eigen::Ref<const Eigen::RowVectorXd>& row, double tol = 0.0);
std::vector<int> greedy_policy(const Mat& q);

// Iterates Q <- c r + gamma_eff E_{s',a'~pi}[lambda Q + (1 - lambda) max(Q, F)]
// where gamma_eff = gamma^(1/n_root) and c is 1 (with_reward) or 0. Absorbing
// successors contribute their exact value 1(h = g)^(1/n_root).
Mat iterate_uvd_target(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma, int g,
                       const Mat& F_col, double lambda, int n_root, bool with_reward,
                       const IterationControl& ctl = {});

// Probability that rolling out `policy` from d0 is in a state achieving g
// at step `horizon` (absorbing goals keep their mass).
double success_within_horizon(const DiscreteMdpSpec& mdp, const std::vector<int>& policy, int g,
                              int horizon);
double mc_success_rate(const DiscreteMdpSpec& mdp, const std::vector<int>& policy, int g,
                       int horizon, int rollouts, Rng& rng);

struct TabularConfig {
  double gamma = 0.95;
  int episodes = 10000;
  int horizon = 40;
  double explore = 0.2;          // epsilon-greedy
  double alpha = 0.1;
  double alpha_final = 0.002;    // linear anneal over episodes
  int updates_per_episode = 200;
  int her_k = 4;
  double lambda = 0.0;
  int truncation = kUntruncated;
  double density_rate = 0.05;    // EMA rate of the count-based density
  int density_updates_per_episode = 200;
  std::size_t long_capacity = 20000;
  std::size_t short_capacity = 2000;
  int goal = -1;                 // intended goal id, -1 = uniform over goals
  bool stop_at_absorbing = false;  // otherwise episodes run the full horizon
};

// Q tables indexed by goal id (n_states x n_actions each).
struct TabularQ {
  std::vector<Mat> q;
  const Mat& operator[](int g) const { return q[static_cast<std::size_t>(g)]; }
};

TabularQ tabular_uvd(const DiscreteMdpSpec& mdp, const TabularConfig& cfg, Rng& rng);
TabularQ tabular_her(const DiscreteMdpSpec& mdp, const TabularConfig& cfg, Rng& rng);

}  // namespace vdl
