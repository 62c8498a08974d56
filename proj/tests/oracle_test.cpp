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

#include <gtest/gtest.h>

#include <cmath>

namespace vdl {
namespace {

DiscreteMdpSpec random_mdp(Rng& rng, int n_states, int n_actions, int n_goals) {
  DiscreteMdpSpec m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.n_goals = n_goals;
  for (int a = 0; a < n_actions; ++a) {
    Mat P(n_states, n_states);
    for (int s = 0; s < n_states; ++s) {
      for (int s2 = 0; s2 < n_states; ++s2) P(s, s2) = rng.uniform() < 0.4 ? rng.uniform() : 0.0;
      P(s, static_cast<int>(rng.index(n_states))) += 0.1;
      P.row(s) /= P.row(s).sum();
    }
    m.P.push_back(P);
  }
  m.start = Vec::Constant(n_states, 1.0 / n_states);
  for (int i = 0; i < n_states * n_actions; ++i) m.goal.push_back(static_cast<int>(rng.index(n_goals)));
  m.absorbing.assign(n_states, false);
  return m;
}

TabularPolicy random_policy(Rng& rng, int n_states, int n_actions) {
  TabularPolicy pi{Mat(n_states, n_actions)};
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) pi.probs(s, a) = rng.uniform() + 0.05;
    pi.probs.row(s) /= pi.probs.row(s).sum();
  }
  return pi;
}

// One state, one action, self loop, goal 0 always achieved.
DiscreteMdpSpec single_state() {
  DiscreteMdpSpec m;
  m.n_states = m.n_actions = m.n_goals = 1;
  m.P = {Mat::Ones(1, 1)};
  m.start = Vec::Ones(1);
  m.goal = {0};
  m.absorbing = {false};
  return m;
}

// s0 -> s1 -> s2 (goal, absorbing); action 1 stays put.
DiscreteMdpSpec chain3() {
  DiscreteMdpSpec m;
  m.n_states = m.n_goals = 3;
  m.n_actions = 2;
  Mat fwd = Mat::Zero(3, 3), stay = Mat::Identity(3, 3);
  fwd(0, 1) = fwd(1, 2) = fwd(2, 2) = 1.0;
  m.P = {fwd, stay};
  m.start = Vec{{1.0, 0.0, 0.0}};
  m.goal = {0, 0, 1, 1, 2, 2};
  m.absorbing = {false, false, true};
  return m;
}

// s0 --a0--> goal (p) or fail (1 - p); both absorbing.
DiscreteMdpSpec gamble(double p) {
  DiscreteMdpSpec m;
  m.n_states = m.n_goals = 3;
  m.n_actions = 1;
  Mat P = Mat::Zero(3, 3);
  P(0, 1) = p;
  P(0, 2) = 1.0 - p;
  P(1, 1) = P(2, 2) = 1.0;
  m.P = {P};
  m.start = Vec{{1.0, 0.0, 0.0}};
  m.goal = {0, 1, 2};
  m.absorbing = {false, true, true};
  return m;
}

TEST(ExactDensity, SingleState) {
  const DiscreteMdpSpec m = single_state();
  for (double gamma : {0.0, 0.5, 0.99}) {
    const Mat F = exact_value_density(m, TabularPolicy::uniform(1, 1), gamma);
    EXPECT_NEAR(F(0, 0), 1.0, 1e-14);
  }
}

TEST(ExactDensity, TwoStateSwap) {
  DiscreteMdpSpec m;
  m.n_states = m.n_goals = 2;
  m.n_actions = 1;
  m.P = {Mat{{0.0, 1.0}, {1.0, 0.0}}};
  m.start = Vec{{1.0, 0.0}};
  m.goal = {0, 1};
  m.absorbing = {false, false};
  const Mat F = exact_value_density(m, TabularPolicy::uniform(2, 1), 0.5);
  // (1 - g)(1 + g^2 + ...) = 1 / (1 + g) at the start, g / (1 + g) across.
  EXPECT_NEAR(F(0, 0), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(F(0, 1), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(F(1, 1), 2.0 / 3.0, 1e-14);
}

TEST(ExactDensity, RowsAreDistributions) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const DiscreteMdpSpec m = random_mdp(rng, 12, 3, 5);
    const Mat F = exact_value_density(m, random_policy(rng, 12, 3), 0.9);
    EXPECT_GE(F.minCoeff(), -1e-14);
    for (Eigen::Index i = 0; i < F.rows(); ++i) EXPECT_NEAR(F.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(ExactDensity, MatchesGoalQ) {
  Rng rng(2024);
  const double gammas[3] = {0.5, 0.9, 0.98};
  for (int trial = 0; trial < 20; ++trial) {
    const int nS = 2 + static_cast<int>(rng.index(19));
    const int nA = 1 + static_cast<int>(rng.index(4));
    const int nG = 1 + static_cast<int>(rng.index(nS));
    const DiscreteMdpSpec m = random_mdp(rng, nS, nA, nG);
    m.validate();
    const TabularPolicy pi = random_policy(rng, nS, nA);
    const double gamma = gammas[trial % 3];
    const Mat F = exact_value_density(m, pi, gamma);
    for (int g = 0; g < nG; ++g)
      EXPECT_LT((exact_goal_q(m, pi, gamma, g) - density_column(m, F, g)).cwiseAbs().maxCoeff(), 1e-10)
          << "trial " << trial << " goal " << g;
  }
}

TEST(ExactDensity, ContractErrors) {
  const DiscreteMdpSpec m = single_state();
  EXPECT_THROW(exact_value_density(m, TabularPolicy::uniform(1, 1), 1.0), Error);
  EXPECT_THROW(exact_value_density(m, TabularPolicy::uniform(2, 1), 0.5), Error);
  EXPECT_THROW(exact_goal_q(m, TabularPolicy::uniform(1, 1), 0.5, 3), Error);
  TabularPolicy bad{Mat::Constant(1, 1, 0.7)};
  EXPECT_THROW(exact_goal_q(m, bad, 0.5, 0), Error);
}

TEST(HerFixedPoint, DeterministicMatchesExact) {
  CliffWalkConfig cfg;
  cfg.slip = 0.0;
  const CliffWalk cw = cliffwalk_build(cfg);
  const TabularPolicy pi = TabularPolicy::uniform(cw.mdp.n_states, 4);
  const Mat exact = exact_goal_q(cw.mdp, pi, 0.9, cw.goal_state);
  const Mat her = her_fixed_point(cw.mdp, pi, 0.9, cw.goal_state);
  EXPECT_LT((her - exact).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(HerFixedPoint, OneStepGambleDoubles) {
  const DiscreteMdpSpec m = gamble(0.5);
  const TabularPolicy pi = TabularPolicy::uniform(3, 1);
  const double gamma = 0.9;
  const Mat exact = exact_goal_q(m, pi, gamma, 1);
  const Mat her = her_fixed_point(m, pi, gamma, 1);
  EXPECT_NEAR(exact(0, 0), 0.5 * gamma, 1e-12);
  EXPECT_NEAR(her(0, 0), gamma, 1e-12);
  EXPECT_NEAR(her(0, 0), 2.0 * exact(0, 0), 1e-12);
  const Mat fin = her_fixed_point(m, pi, gamma, 1, RelabelStrategy::kFinal, 5);
  EXPECT_NEAR(fin(0, 0), gamma, 1e-12);
}

TEST(HerFixedPoint, NeverBelowExact) {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    DiscreteMdpSpec m = random_mdp(rng, 10, 3, 10);
    for (int s = 0; s < 10; ++s)
      for (int a = 0; a < 3; ++a) m.goal[s * 3 + a] = s;
    const TabularPolicy pi = random_policy(rng, 10, 3);
    const int g = static_cast<int>(rng.index(10));
    const Mat exact = exact_goal_q(m, pi, 0.9, g);
    const Mat her = her_fixed_point(m, pi, 0.9, g);
    EXPECT_GE((her - exact).minCoeff(), -1e-10) << "trial " << trial;
  }
}

TEST(HerFixedPoint, OverestimatesNearTheCliff) {
  const CliffWalk cw = cliffwalk_build({});
  const double gamma = TabularConfig{}.gamma;
  const OptimalControl opt = value_iteration(cw.mdp, gamma, cw.goal_state);
  const TabularPolicy pi = TabularPolicy::deterministic(opt.policy, 4);
  const Mat exact = exact_goal_q(cw.mdp, pi, gamma, cw.goal_state);
  const Mat her = her_fixed_point(cw.mdp, pi, gamma, cw.goal_state);
  double gap = 0.0;
  for (int s : cliff_adjacent_states(cw))
    for (int a = 0; a < 4; ++a) gap = std::max(gap, her(s, a) - exact(s, a));
  EXPECT_GT(gap, 0.1);
}

TEST(HerFixedPoint, NonConvergenceReported) {
  const CliffWalk cw = cliffwalk_build({});
  const TabularPolicy pi = TabularPolicy::uniform(cw.mdp.n_states, 4);
  try {
    her_fixed_point(cw.mdp, pi, 0.99, cw.goal_state, RelabelStrategy::kFuture, 100, {1e-13, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(ValueIteration, ChainIsGreedyForward) {
  const DiscreteMdpSpec m = chain3();
  const OptimalControl opt = value_iteration(m, 0.9, 2);
  EXPECT_EQ(opt.policy[0], 0);
  EXPECT_EQ(opt.policy[1], 0);
  EXPECT_NEAR(opt.q(0, 0), 0.81, 1e-12);
  EXPECT_NEAR(opt.q(0, 1), 0.9 * 0.81, 1e-12);
  EXPECT_NEAR(opt.q(2, 1), 1.0, 1e-12);
}

TEST(ValueIteration, MatchesPolicyEvaluationOfItsPolicy) {
  const CliffWalk cw = cliffwalk_build({});
  const OptimalControl opt = value_iteration(cw.mdp, 0.95, cw.goal_state);
  const Mat q = exact_goal_q(cw.mdp, TabularPolicy::deterministic(opt.policy, 4), 0.95, cw.goal_state);
  EXPECT_LT((q - opt.q).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Greedy, SetsAndTies) {
  const Eigen::RowVectorXd row{{0.3, 0.5, 0.5, 0.49}};
  EXPECT_EQ(greedy_set(row), (std::vector<int>{1, 2}));
  EXPECT_EQ(greedy_set(row, 0.02), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(greedy_policy(Mat(row)), (std::vector<int>{1}));
}

TEST(RootedValues, GreedySetsUnchanged) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    DiscreteMdpSpec m = random_mdp(rng, 15, 4, 15);
    for (int s = 0; s < 15; ++s)
      for (int a = 0; a < 4; ++a) m.goal[s * 4 + a] = s;
    const int g = static_cast<int>(rng.index(15));
    const Mat q = value_iteration(m, 0.9, g).q;
    for (int n : {2, 3, 8}) {
      const Mat root = q.array().pow(1.0 / n).matrix();
      for (int s = 0; s < 15; ++s) EXPECT_EQ(greedy_set(q.row(s)), greedy_set(root.row(s)));
    }
  }
  const CliffWalk cw = cliffwalk_build({});
  const Mat q = value_iteration(cw.mdp, 0.95, cw.goal_state).q;
  const Mat root = q.array().pow(1.0 / 4).matrix();
  for (int s = 0; s < cw.mdp.n_states; ++s) EXPECT_EQ(greedy_set(q.row(s)), greedy_set(root.row(s)));
}

TEST(RootedValues, ChainFixedPointIsRootedQ) {
  const DiscreteMdpSpec m = chain3();
  const double gamma = 0.9;
  for (const auto& actions : {std::vector<int>{0, 0, 0}, std::vector<int>{1, 0, 1}}) {
    const TabularPolicy pi = TabularPolicy::deterministic(actions, 2);
    const Mat q = exact_goal_q(m, pi, gamma, 2);
    for (int n : {1, 2, 5}) {
      const Mat fp = iterate_uvd_target(m, pi, gamma, 2, Mat::Zero(3, 2), 1.0, n, false);
      const Mat want = q.array().pow(1.0 / n).matrix();
      EXPECT_LT((fp.topRows(2) - want.topRows(2)).cwiseAbs().maxCoeff(), 1e-8) << "n=" << n;
    }
  }
}

TEST(UvdTarget, ExactDensityGivesTrueQ) {
  const CliffWalk cw = cliffwalk_build({});
  const int g = cw.goal_state;
  for (double lambda : {0.0, 0.5, 1.0}) {
    const TabularPolicy pi = TabularPolicy::uniform(cw.mdp.n_states, 4);
    const Mat F = density_column(cw.mdp, exact_value_density(cw.mdp, pi, 0.9), g);
    const Mat q = exact_goal_q(cw.mdp, pi, 0.9, g);
    const Mat fp = iterate_uvd_target(cw.mdp, pi, 0.9, g, F, lambda, 1, true);
    EXPECT_LT((fp - q).cwiseAbs().maxCoeff(), 1e-8) << "lambda " << lambda;
  }
  const OptimalControl opt = value_iteration(cw.mdp, 0.95, g);
  const TabularPolicy pi = TabularPolicy::deterministic(opt.policy, 4);
  const Mat F = density_column(cw.mdp, exact_value_density(cw.mdp, pi, 0.95), g);
  const Mat fp = iterate_uvd_target(cw.mdp, pi, 0.95, g, F, 0.0, 1, true);
  EXPECT_LT((fp - exact_goal_q(cw.mdp, pi, 0.95, g)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(UvdTarget, DensityOnlyRaisesTheTarget) {
  const CliffWalk cw = cliffwalk_build({});
  const TabularPolicy pi = TabularPolicy::uniform(cw.mdp.n_states, 4);
  const int g = cw.goal_state;
  const Mat plain = iterate_uvd_target(cw.mdp, pi, 0.9, g, Mat::Zero(33, 4), 0.0, 1, true);
  EXPECT_LT((plain - exact_goal_q(cw.mdp, pi, 0.9, g)).cwiseAbs().maxCoeff(), 1e-8);
  const Mat boosted = iterate_uvd_target(cw.mdp, pi, 0.9, g, Mat::Constant(33, 4, 0.5), 0.0, 1, true);
  EXPECT_GE((boosted - plain).minCoeff(), -1e-12);
}

TEST(Success, ExactMatchesMonteCarlo) {
  const CliffWalk cw = cliffwalk_build({});
  const OptimalControl opt = value_iteration(cw.mdp, 0.95, cw.goal_state);
  const double exact = success_within_horizon(cw.mdp, opt.policy, cw.goal_state, 40);
  Rng rng(4);
  const int n = 10000;
  const double mc = mc_success_rate(cw.mdp, opt.policy, cw.goal_state, 40, n, rng);
  EXPECT_NEAR(mc, exact, 4.0 * std::sqrt(exact * (1.0 - exact) / n));
  CliffWalkConfig clean;
  clean.slip = 0.0;
  const CliffWalk c0 = cliffwalk_build(clean);
  const OptimalControl o0 = value_iteration(c0.mdp, 0.95, c0.goal_state);
  EXPECT_DOUBLE_EQ(success_within_horizon(c0.mdp, o0.policy, c0.goal_state, 40), 1.0);
  EXPECT_DOUBLE_EQ(success_within_horizon(c0.mdp, o0.policy, c0.goal_state, 2), 0.0);
}

TEST(Tabular, LearnersSolveTheNoiselessGrid) {
  CliffWalkConfig clean;
  clean.slip = 0.0;
  const CliffWalk cw = cliffwalk_build(clean);
  TabularConfig cfg;
  cfg.goal = cw.goal_state;
  cfg.episodes = 1000;
  Rng r1(1), r2(1);
  const TabularQ uvd = tabular_uvd(cw.mdp, cfg, r1);
  const TabularQ her = tabular_her(cw.mdp, cfg, r2);
  EXPECT_DOUBLE_EQ(success_within_horizon(cw.mdp, greedy_policy(uvd[cw.goal_state]), cw.goal_state, 40), 1.0);
  EXPECT_DOUBLE_EQ(success_within_horizon(cw.mdp, greedy_policy(her[cw.goal_state]), cw.goal_state, 40), 1.0);
}

}  // namespace
}  // namespace vdl
