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

// Goal-conditioned TD3 with three critic-target modes: plain TD, HER
// relabeling, and the universal value density (UVD) target that takes the
// larger of the bootstrapped value and a learned discounted goal density.

#include "vdlab/envs.hpp"
#include "vdlab/flows.hpp"
#include "vdlab/replay.hpp"

#include <memory>
#include <string>
#include <vector>

namespace vdl {

enum class Algo { kTd3, kHer, kUvd };
const char* algo_name(Algo a);
Algo algo_from_name(const std::string& name);

struct UvdConfig {
  double gamma = 0.98;
  int truncation = 4;             // density horizon T
  double lambda = 0.0;            // temporal smoothing
  double spatial_sigma = 0.02;    // goal noise for density fitting (normalized units)
  double explore_sigma = 0.1;
  double random_eps = 0.2;        // probability of a uniform random action
  int target_sync = 50;           // updates between hard target copies
  bool logit_averaging = false;
  int batch = 128;
  int her_k = 4;
  std::vector<int> actor_hidden = {64, 64};
  std::vector<int> critic_hidden = {64, 64};
  std::vector<int> flow_hidden = {64, 64};
  int flow_layers = 5;
  double actor_lr = 8e-4;
  double critic_lr = 8e-4;
  double flow_lr = 2e-4;
  double flow_l2 = 1e-5;
  std::size_t long_capacity = 150000;
  std::size_t short_capacity = 5000;
  int updates_per_iteration = 16;
  int density_updates_per_iteration = 16;
  int warmup_episodes = 10;       // random-action episodes before learning

  void validate() const;
  // gamma^(1/n) with logit averaging over an n-dimensional goal, else gamma.
  double gamma_eff(int goal_dim) const;
  double density_cap() const { return 10.0 / (1.0 - gamma); }
};

struct AgentNets {
  int state_dim = 0;
  int action_dim = 0;
  int goal_dim = 0;
  Mlp actor;                  // [s, g] -> a, tanh
  Mlp critic1, critic2;       // [s, a, g] -> Q
  Mlp actor_target, critic1_target, critic2_target;
  bool has_density = false;
  Flow density;               // F(g | s, a, g_bar)
  Flow density_target;

  static AgentNets make(int state_dim, int action_dim, int goal_dim, const UvdConfig& cfg,
                        bool with_density, Rng& rng);
  int density_cond_dim() const { return state_dim + action_dim + goal_dim; }
};

// Normalized inputs. `s` and `g` hold one sample per column.
Vec act(const AgentNets& nets, const Vec& s, const Vec& g, double sigma, Rng& rng);
Mat policy_actions(const Mlp& actor, const Mat& s, const Mat& g);
Vec critic_values(const Mlp& critic, const Mat& s, const Mat& a, const Mat& g);

struct CriticBatch {
  Mat s, a, s2, g;               // normalized, one column per sample
  Vec reward;
  std::vector<bool> terminal;    // s2 absorbing
  Vec terminal_value;            // exact value of an absorbing s2
  bool terminal_density = false; // absorbing s2 bootstraps its density instead
};

struct TargetStats {
  int density_fallbacks = 0;     // non-finite densities replaced by q_t
  double mean_density = 0.0;
};

// Plain TD3 target r + gamma_eff * min(Q1', Q2') at the target action.
Vec td_target(const AgentNets& nets, const UvdConfig& cfg, const CriticBatch& b);

// r + gamma_eff [lambda q_t + (1 - lambda) max(q_t, f)] with f the target
// density of g at (s2, mu'(s2), g), converted to raw goal units by
// `goal_log_jacobian` and clamped to density_cap(). Absorbing successors
// bootstrap terminal_value, or f alone when b.terminal_density is set.
Vec uvd_target(const AgentNets& nets, const UvdConfig& cfg, const CriticBatch& b,
               double goal_log_jacobian, TargetStats* stats = nullptr);

// Density value used by targets: exp(log F + log_jac), or its N-th root with
// logit averaging, clamped to `cap`. Non-finite entries stay NaN.
Vec density_values(const Flow& flow, const Mat& x, const Mat& cond, double goal_log_jacobian,
                   bool averaging, double cap);

// Mean squared error of `critic` to `targets`; accumulates its parameter
// gradient into `grads`.
double critic_loss_and_grad(const Mlp& critic, const CriticBatch& b, const Vec& targets, Mlp& grads);

// One Adam step per twin critic on the mean squared error to `targets`.
// Returns the mean of the two losses before the step.
double critic_update(AgentNets& nets, const CriticBatch& b, const Vec& targets, AdamState& opt1,
                     AdamState& opt2);

// Per-sample weights scale the actor objective (1 when empty). Returns the
// mean weighted Q before the step.
double actor_update(AgentNets& nets, const Mat& s, const Mat& g, AdamState& opt,
                    const Vec& weights = Vec());

// Parameter gradient of -mean(w * Q1(s, mu(s, g), g)) with respect to the
// actor, accumulated into `grads`.
double actor_loss_and_grad(const AgentNets& nets, const Mat& s, const Mat& g, const Vec& weights,
                           Mlp& grads);

// Hard copy of online networks into targets when step is a positive
// multiple of period. Returns whether a copy happened.
bool target_sync(AgentNets& nets, int period, long step);

class GoalAgent {
 public:
  GoalAgent(std::unique_ptr<GoalEnv> env, Algo algo, const UvdConfig& cfg, std::uint64_t seed);

  struct Metrics {
    long iteration = 0;
    long env_steps = 0;
    double episode_return = 0.0;  // (1 - gamma)-scaled sparse reward sum
    bool episode_success = false;
    double critic_loss = 0.0;
    double actor_objective = 0.0;
    double density_nll = 0.0;
    int density_fallbacks = 0;
    double mean_density = 0.0;    // mean f in UVD targets
    bool learned = false;         // networks were updated this iteration
  };

  Metrics iterate();
  Metrics uvd_iteration();
  Metrics her_iteration();
  Metrics td3_iteration();

  // Greedy rollouts; success means the final achieved goal reaches the goal,
  // or any visited one on envs that score visits.
  double evaluate(int n_episodes, Rng& rng) const;

  // Raw state/goal in, action out.
  Vec policy(const Vec& state, const Vec& goal) const;
  double q_value(const Vec& state, const Vec& action, const Vec& goal) const;

  Algo algo() const { return algo_; }
  const UvdConfig& config() const { return cfg_; }
  const GoalEnv& env() const { return *env_; }
  AgentNets& nets() { return nets_; }
  const AgentNets& nets() const { return nets_; }
  const Ranges& state_ranges() const { return state_ranges_; }
  const Ranges& goal_ranges() const { return goal_ranges_; }
  double goal_log_jacobian() const { return goal_log_jac_; }
  long iterations() const { return iteration_; }
  long env_steps() const { return env_steps_; }
  long updates() const { return updates_; }

 private:
  Episode collect(bool random_actions, double* ret, bool* success);
  CriticBatch make_batch(const std::vector<Transition>& trs) const;
  Metrics learn(Metrics m);
  double fit_density();
  Vec norm_state(const Vec& s) const { return normalize_state(s, state_ranges_); }
  Vec norm_goal(const Vec& g) const { return normalize_state(g, goal_ranges_); }

  std::unique_ptr<GoalEnv> env_;
  Algo algo_;
  UvdConfig cfg_;
  Rng rng_;
  AgentNets nets_;
  AdamState actor_opt_, critic1_opt_, critic2_opt_, flow_opt_;
  ReplayBuffer long_buf_, short_buf_;
  Ranges state_ranges_, goal_ranges_;
  double goal_log_jac_ = 0.0;
  GoalReward reward_;
  long iteration_ = 0;
  long env_steps_ = 0;
  long updates_ = 0;
};

}  // namespace vdl
