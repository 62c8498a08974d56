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

#include "vdlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vdl {

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  return {Mat::Constant(n_states, n_actions, 1.0 / n_actions)};
}

TabularPolicy TabularPolicy::deterministic(const std::vector<int>& actions, int n_actions) {
  TabularPolicy pi{Mat::Zero(static_cast<Eigen::Index>(actions.size()), n_actions)};
  for (std::size_t s = 0; s < actions.size(); ++s) {
    VDL_CONTRACT(actions[s] >= 0 && actions[s] < n_actions, "policy: action out of range");
    pi.probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return pi;
}

void TabularPolicy::validate() const {
  VDL_CONTRACT((probs.array() >= 0.0).all(), "policy: negative probability");
  for (Eigen::Index s = 0; s < probs.rows(); ++s)
    VDL_CONTRACT(std::abs(probs.row(s).sum() - 1.0) <= 1e-12, "policy: row does not sum to 1");
}

namespace {

void check(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma) {
  VDL_CONTRACT(gamma >= 0.0 && gamma < 1.0, "oracle: gamma must be in [0, 1)");
  VDL_CONTRACT(pi.probs.rows() == mdp.n_states && pi.probs.cols() == mdp.n_actions,
               "oracle: policy shape does not match the MDP");
  pi.validate();
}

Mat reward_table(const DiscreteMdpSpec& mdp, double gamma, int g) {
  Mat r = Mat::Zero(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      if (mdp.h(s, a) == g) r(s, a) = 1.0 - gamma;
  return r;
}

// Expected next-state value: out(s, a) = sum_s' P(s'|s,a) v(s').
Mat expect_next(const DiscreteMdpSpec& mdp, const Vec& v) {
  Mat out(mdp.n_states, mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a) out.col(a) = mdp.P[static_cast<std::size_t>(a)] * v;
  return out;
}

// Probability of achieving g in state s under pi's action choice.
Vec achieves(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, int g) {
  Vec w = Vec::Zero(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      if (mdp.h(s, a) == g) w[s] += pi.probs(s, a);
  return w;
}

Vec state_value(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma, int g) {
  const Mat r = reward_table(mdp, gamma, g);
  const Vec r_pi = r.cwiseProduct(pi.probs).rowwise().sum();
  const Mat A = Mat::Identity(mdp.n_states, mdp.n_states) - gamma * state_kernel(mdp, pi);
  return A.partialPivLu().solve(r_pi);
}

}  // namespace

Mat state_kernel(const DiscreteMdpSpec& mdp, const TabularPolicy& pi) {
  Mat K = Mat::Zero(mdp.n_states, mdp.n_states);
  for (int a = 0; a < mdp.n_actions; ++a)
    K += pi.probs.col(a).asDiagonal() * mdp.P[static_cast<std::size_t>(a)];
  return K;
}

Mat state_action_kernel(const DiscreteMdpSpec& mdp, const TabularPolicy& pi) {
  const int nA = mdp.n_actions;
  const int n = mdp.n_states * nA;
  Mat K = Mat::Zero(n, n);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < nA; ++a)
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        const double p = mdp.prob(s, a, s2);
        if (p == 0.0) continue;
        for (int a2 = 0; a2 < nA; ++a2) K(s * nA + a, s2 * nA + a2) = p * pi.probs(s2, a2);
      }
  return K;
}

VisitationTable exact_value_density(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma) {
  check(mdp, pi, gamma);
  const int n = mdp.n_states * mdp.n_actions;
  Mat H = Mat::Zero(n, mdp.n_goals);
  for (int i = 0; i < n; ++i) H(i, mdp.goal[static_cast<std::size_t>(i)]) = 1.0;
  const Mat A = Mat::Identity(n, n) - gamma * state_action_kernel(mdp, pi);
  Eigen::PartialPivLU<Mat> lu(A);
  VDL_REQUIRE(std::abs(lu.determinant()) > 0.0, ErrorCode::kNumeric, "exact_value_density: singular system");
  return (1.0 - gamma) * lu.solve(H);
}

Mat exact_goal_q(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma, int g) {
  check(mdp, pi, gamma);
  VDL_CONTRACT(g >= 0 && g < mdp.n_goals, "exact_goal_q: goal out of range");
  const Vec v = state_value(mdp, pi, gamma, g);
  return reward_table(mdp, gamma, g) + gamma * expect_next(mdp, v);
}

Mat density_column(const DiscreteMdpSpec& mdp, const VisitationTable& F, int g) {
  Mat out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) out(s, a) = F(s * mdp.n_actions + a, g);
  return out;
}

Mat her_fixed_point(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma, int g,
                    RelabelStrategy strategy, int final_horizon, const IterationControl& ctl) {
  check(mdp, pi, gamma);
  VDL_CONTRACT(g >= 0 && g < mdp.n_goals, "her_fixed_point: goal out of range");
  Vec w;
  if (strategy == RelabelStrategy::kFuture) {
    w = state_value(mdp, pi, gamma, g);
  } else {
    VDL_CONTRACT(final_horizon >= 0, "her_fixed_point: negative final horizon");
    const Mat K = state_kernel(mdp, pi);
    w = achieves(mdp, pi, g);
    for (int t = 0; t < final_horizon; ++t) w = K * w;
  }

  // Tilted kernels, one per action.
  std::vector<Mat> Pt(static_cast<std::size_t>(mdp.n_actions));
  for (int a = 0; a < mdp.n_actions; ++a) {
    const Mat& P = mdp.P[static_cast<std::size_t>(a)];
    Mat T = P * w.asDiagonal();
    for (int s = 0; s < mdp.n_states; ++s) {
      const double z = T.row(s).sum();
      if (z > 0.0)
        T.row(s) /= z;
      else
        T.row(s) = P.row(s);
    }
    Pt[static_cast<std::size_t>(a)] = std::move(T);
  }

  const Mat r = reward_table(mdp, gamma, g);
  Mat q = Mat::Zero(mdp.n_states, mdp.n_actions);
  double residual = 0.0;
  for (int it = 0; it < ctl.max_iterations; ++it) {
    const Vec v = q.cwiseProduct(pi.probs).rowwise().sum();
    Mat next(mdp.n_states, mdp.n_actions);
    for (int a = 0; a < mdp.n_actions; ++a) next.col(a) = r.col(a) + gamma * Pt[static_cast<std::size_t>(a)] * v;
    residual = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (residual <= ctl.tolerance) return q;
  }
  throw Error(ErrorCode::kNumeric,
              "her_fixed_point: no convergence, residual " + std::to_string(residual));
}

OptimalControl value_iteration(const DiscreteMdpSpec& mdp, double gamma, int g, const IterationControl& ctl) {
  VDL_CONTRACT(gamma >= 0.0 && gamma < 1.0, "value_iteration: gamma must be in [0, 1)");
  VDL_CONTRACT(g >= 0 && g < mdp.n_goals, "value_iteration: goal out of range");
  const Mat r = reward_table(mdp, gamma, g);
  Mat q = Mat::Zero(mdp.n_states, mdp.n_actions);
  double residual = 0.0;
  for (int it = 0; it < ctl.max_iterations; ++it) {
    const Vec v = q.rowwise().maxCoeff();
    Mat next = r + gamma * expect_next(mdp, v);
    residual = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (residual <= ctl.tolerance) return {q, greedy_policy(q)};
  }
  throw Error(ErrorCode::kNumeric, "value_iteration: no convergence, residual " + std::to_string(residual));
}

std::vector<int> greedy_set(const Eigen::Ref<const Eigen::RowVectorXd>& row, double tol) {
  const double best = row.maxCoeff();
  std::vector<int> out;
  for (Eigen::Index a = 0; a < row.size(); ++a)
    if (row[a] >= best - tol) out.push_back(static_cast<int>(a));
  return out;
}

std::vector<int> greedy_policy(const Mat& q) {
  std::vector<int> out(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index best = 0;
    q.row(s).maxCoeff(&best);
    out[static_cast<std::size_t>(s)] = static_cast<int>(best);
  }
  return out;
}

Mat iterate_uvd_target(const DiscreteMdpSpec& mdp, const TabularPolicy& pi, double gamma, int g,
                       const Mat& F_col, double lambda, int n_root, bool with_reward,
                       const IterationControl& ctl) {
  check(mdp, pi, gamma);
  VDL_CONTRACT(n_root >= 1, "iterate_uvd_target: root must be at least 1");
  VDL_CONTRACT(lambda >= 0.0 && lambda <= 1.0, "iterate_uvd_target: lambda must be in [0, 1]");
  VDL_CONTRACT(F_col.rows() == mdp.n_states && F_col.cols() == mdp.n_actions,
               "iterate_uvd_target: density table shape");
  const double gamma_eff = std::pow(gamma, 1.0 / n_root);
  const Mat r = with_reward ? reward_table(mdp, gamma, g) : Mat::Zero(mdp.n_states, mdp.n_actions);
  Vec absorbed = Vec::Zero(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    if (mdp.absorbing[static_cast<std::size_t>(s)] && mdp.h(s, 0) == g) absorbed[s] = 1.0;

  Mat q = Mat::Zero(mdp.n_states, mdp.n_actions);
  double residual = 0.0;
  for (int it = 0; it < ctl.max_iterations; ++it) {
    const Mat mixed = lambda * q + (1.0 - lambda) * q.cwiseMax(F_col);
    Vec v = mixed.cwiseProduct(pi.probs).rowwise().sum();
    for (int s = 0; s < mdp.n_states; ++s)
      if (mdp.absorbing[static_cast<std::size_t>(s)]) v[s] = absorbed[s];
    Mat next = r + gamma_eff * expect_next(mdp, v);
    residual = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (residual <= ctl.tolerance) return q;
  }
  throw Error(ErrorCode::kNumeric, "iterate_uvd_target: no convergence, residual " + std::to_string(residual));
}

double success_within_horizon(const DiscreteMdpSpec& mdp, const std::vector<int>& policy, int g,
                              int horizon) {
  VDL_CONTRACT(static_cast<int>(policy.size()) == mdp.n_states, "success_within_horizon: policy size");
  Vec d = mdp.start;
  double success = 0.0;
  for (int t = 0;; ++t) {
    for (int s = 0; s < mdp.n_states; ++s)
      if (mdp.h(s, policy[static_cast<std::size_t>(s)]) == g) {
        success += d[s];
        d[s] = 0.0;
      }
    if (t == horizon) break;
    Vec next = Vec::Zero(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s)
      if (d[s] > 0.0) next += d[s] * mdp.P[static_cast<std::size_t>(policy[static_cast<std::size_t>(s)])].row(s).transpose();
    d = std::move(next);
  }
  return success;
}

double mc_success_rate(const DiscreteMdpSpec& mdp, const std::vector<int>& policy, int g,
                       int horizon, int rollouts, Rng& rng) {
  VDL_CONTRACT(rollouts > 0, "mc_success_rate: need at least one rollout");
  int hits = 0;
  for (int i = 0; i < rollouts; ++i) {
    int s = mdp.sample_start(rng);
    for (int t = 0;; ++t) {
      const int a = policy[static_cast<std::size_t>(s)];
      if (mdp.h(s, a) == g) {
        ++hits;
        break;
      }
      if (t == horizon || mdp.absorbing[static_cast<std::size_t>(s)]) break;
      s = mdp.sample_next(s, a, rng);
    }
  }
  return static_cast<double>(hits) / rollouts;
}

// ---------------------------------------------------------------------------
// Sample-based tabular learners.

namespace {

int argmax_random_ties(const Eigen::Ref<const Eigen::RowVectorXd>& row, Rng& rng) {
  const double best = row.maxCoeff();
  int chosen = -1;
  int seen = 0;
  for (Eigen::Index a = 0; a < row.size(); ++a)
    if (row[a] == best && rng.index(static_cast<std::size_t>(++seen)) == 0) chosen = static_cast<int>(a);
  return chosen;
}

Vec scalar(double x) { return Vec::Constant(1, x); }
int as_id(const Vec& v) { return static_cast<int>(v[0]); }

Episode collect(const DiscreteMdpSpec& mdp, const Mat& q, int goal, const TabularConfig& cfg, Rng& rng) {
  Episode ep;
  ep.goal = scalar(goal);
  int s = mdp.sample_start(rng);
  ep.states.push_back(scalar(s));
  for (int t = 0; t < cfg.horizon; ++t) {
    const int a = rng.uniform() < cfg.explore ? static_cast<int>(rng.index(static_cast<std::size_t>(mdp.n_actions)))
                                              : argmax_random_ties(q.row(s), rng);
    ep.actions.push_back(scalar(a));
    ep.achieved.push_back(scalar(mdp.h(s, a)));
    s = mdp.sample_next(s, a, rng);
    ep.states.push_back(scalar(s));
    if (cfg.stop_at_absorbing && mdp.absorbing[static_cast<std::size_t>(s)]) {
      ep.terminal = true;
      break;
    }
  }
  ep.achieved.push_back(scalar(mdp.h(s, 0)));
  return ep;
}

int draw_goal(const DiscreteMdpSpec& mdp, const TabularConfig& cfg, Rng& rng) {
  return cfg.goal >= 0 ? cfg.goal : static_cast<int>(rng.index(static_cast<std::size_t>(mdp.n_goals)));
}

void check_cfg(const DiscreteMdpSpec& mdp, const TabularConfig& cfg) {
  mdp.validate();
  VDL_REQUIRE(cfg.gamma >= 0.0 && cfg.gamma < 1.0, ErrorCode::kConfig, "tabular: gamma must be in [0, 1)");
  VDL_REQUIRE(cfg.goal < mdp.n_goals, ErrorCode::kConfig, "tabular: goal out of range");
  VDL_REQUIRE(cfg.horizon > 0 && cfg.episodes >= 0, ErrorCode::kConfig, "tabular: bad budget");
}

// Value of an absorbing successor under goal g: it achieves g forever or never.
double absorbed_value(const DiscreteMdpSpec& mdp, int s2, int g) { return mdp.h(s2, 0) == g ? 1.0 : 0.0; }

double step_size(const TabularConfig& cfg, int episode) {
  const double frac = cfg.episodes > 1 ? static_cast<double>(episode) / (cfg.episodes - 1) : 0.0;
  return cfg.alpha + frac * (cfg.alpha_final - cfg.alpha);
}

}  // namespace

TabularQ tabular_uvd(const DiscreteMdpSpec& mdp, const TabularConfig& cfg, Rng& rng) {
  check_cfg(mdp, cfg);
  const int nA = mdp.n_actions;
  TabularQ out{std::vector<Mat>(static_cast<std::size_t>(mdp.n_goals), Mat::Zero(mdp.n_states, nA))};
  // Count-based density per intended goal: row (s, a) -> distribution over goals.
  std::vector<Mat> F(static_cast<std::size_t>(mdp.n_goals));
  ReplayBuffer long_buf(cfg.long_capacity, BufferRole::kLong);
  ReplayBuffer short_buf(cfg.short_capacity, BufferRole::kShort);

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const int goal = draw_goal(mdp, cfg, rng);
    const double alpha = step_size(cfg, ep);
    Episode e = collect(mdp, out.q[static_cast<std::size_t>(goal)], goal, cfg, rng);
    long_buf.push(e);
    short_buf.push(std::move(e));

    for (int i = 0; i < cfg.density_updates_per_episode; ++i) {
      const HindsightSample hs = short_buf.sample_geometric_goal(cfg.gamma, cfg.truncation, rng);
      Mat& Fg = F[static_cast<std::size_t>(as_id(hs.intended))];
      if (Fg.size() == 0) Fg = Mat::Zero(mdp.n_states * nA, mdp.n_goals);
      const int row = as_id(hs.s) * nA + as_id(hs.a);
      Fg.row(row) *= 1.0 - cfg.density_rate;
      Fg(row, as_id(hs.goal)) += cfg.density_rate;
    }

    for (int i = 0; i < cfg.updates_per_episode; ++i) {
      const auto [ei, t] = long_buf.locate(rng.index(long_buf.transitions()));
      const Transition tr = long_buf.transition(ei, t);
      const int s = as_id(tr.s), a = as_id(tr.a), s2 = as_id(tr.s2), g = as_id(tr.goal);
      Mat& q = out.q[static_cast<std::size_t>(g)];
      const double r = mdp.h(s, a) == g ? 1.0 - cfg.gamma : 0.0;
      double boot;
      if (tr.terminal) {
        boot = absorbed_value(mdp, s2, g);
      } else {
        Eigen::Index a2 = 0;
        const double qt = q.row(s2).maxCoeff(&a2);
        const Mat& Fg = F[static_cast<std::size_t>(g)];
        const double f = Fg.size() ? Fg(s2 * nA + a2, g) : 0.0;
        boot = cfg.lambda * qt + (1.0 - cfg.lambda) * std::max(qt, f);
      }
      q(s, a) += alpha * (r + cfg.gamma * boot - q(s, a));
    }
  }
  return out;
}

TabularQ tabular_her(const DiscreteMdpSpec& mdp, const TabularConfig& cfg, Rng& rng) {
  check_cfg(mdp, cfg);
  TabularQ out{std::vector<Mat>(static_cast<std::size_t>(mdp.n_goals), Mat::Zero(mdp.n_states, mdp.n_actions))};
  ReplayBuffer long_buf(cfg.long_capacity, BufferRole::kLong);
  GoalReward reward{cfg.gamma, [](const Vec& ag, const Vec& g) { return as_id(ag) == as_id(g); }};

  double alpha = cfg.alpha;
  auto update = [&](const Transition& tr) {
    const int s = as_id(tr.s), a = as_id(tr.a), s2 = as_id(tr.s2), g = as_id(tr.goal);
    Mat& q = out.q[static_cast<std::size_t>(g)];
    const double boot = tr.terminal ? absorbed_value(mdp, s2, g) : q.row(s2).maxCoeff();
    q(s, a) += alpha * (tr.reward + cfg.gamma * boot - q(s, a));
  };

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const int goal = draw_goal(mdp, cfg, rng);
    alpha = step_size(cfg, ep);
    long_buf.push(collect(mdp, out.q[static_cast<std::size_t>(goal)], goal, cfg, rng));
    for (int i = 0; i < cfg.updates_per_episode; ++i) {
      const auto [ei, t] = long_buf.locate(rng.index(long_buf.transitions()));
      Transition tr = long_buf.transition(ei, t);
      tr.reward = reward(tr.achieved, tr.goal);
      update(tr);
      for (int k = 0; k < cfg.her_k; ++k)
        update(her_relabel(long_buf.episode(ei), t, RelabelStrategy::kFuture, reward, rng));
    }
  }
  return out;
}

}  // namespace vdl
