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

#include "vdlab/agent.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace vdl {
namespace {

UvdConfig small_config() {
  UvdConfig cfg;
  cfg.actor_hidden = {16, 16};
  cfg.critic_hidden = {16, 16};
  cfg.flow_hidden = {16};
  cfg.flow_layers = 2;
  cfg.batch = 16;
  return cfg;
}

AgentNets small_nets(const UvdConfig& cfg, std::uint64_t seed = 1, bool density = true) {
  Rng rng(seed);
  return AgentNets::make(3, 2, 2, cfg, density, rng);
}

CriticBatch random_batch(const AgentNets& n, int size, Rng& rng) {
  CriticBatch b;
  auto fill = [&](int rows) {
    Mat m(rows, size);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
  };
  b.s = fill(n.state_dim);
  b.a = fill(n.action_dim);
  b.s2 = fill(n.state_dim);
  b.g = fill(n.goal_dim);
  b.reward = Vec::Zero(size);
  for (int i = 0; i < size; i += 3) b.reward[i] = 0.02;
  b.terminal.assign(static_cast<std::size_t>(size), false);
  b.terminal_value = Vec::Zero(size);
  return b;
}

// Independent evaluation of the UVD regression target for one sample.
double expected_target(const AgentNets& n, const UvdConfig& cfg, const CriticBatch& b, Eigen::Index i,
                       double log_jac) {
  const Vec s2 = b.s2.col(i), g = b.g.col(i);
  const Vec a2 = n.actor_target.forward(concat({&s2, &g}));
  const double q = std::min(n.critic1_target.forward(concat({&s2, &a2, &g}))[0],
                            n.critic2_target.forward(concat({&s2, &a2, &g}))[0]);
  double lp = n.density_target.logpdf(g, concat({&s2, &a2, &g})).value;
  if (!cfg.logit_averaging) lp += log_jac;
  else lp = (lp * n.goal_dim + log_jac) / n.goal_dim;
  const double f = std::min(std::exp(lp), cfg.density_cap());
  const double ge = cfg.logit_averaging ? std::pow(cfg.gamma, 1.0 / n.goal_dim) : cfg.gamma;
  return b.reward[i] + ge * (cfg.lambda * q + (1.0 - cfg.lambda) * std::max(q, f));
}

TEST(Config, ValidatesAndComputesEffectiveDiscount) {
  UvdConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.gamma_eff(3), 0.98);
  cfg.logit_averaging = true;
  EXPECT_DOUBLE_EQ(cfg.gamma_eff(3), std::pow(0.98, 1.0 / 3.0));
  EXPECT_NEAR(cfg.density_cap(), 500.0, 1e-9);
  for (auto breaks : std::vector<void (*)(UvdConfig&)>{
           [](UvdConfig& c) { c.gamma = 1.0; }, [](UvdConfig& c) { c.lambda = -0.1; },
           [](UvdConfig& c) { c.target_sync = 0; }, [](UvdConfig& c) { c.batch = 0; },
           [](UvdConfig& c) { c.random_eps = 2.0; }, [](UvdConfig& c) { c.critic_lr = 0.0; }}) {
    UvdConfig bad;
    breaks(bad);
    try {
      bad.validate();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig);
    }
  }
  EXPECT_EQ(algo_from_name("uvd"), Algo::kUvd);
  EXPECT_STREQ(algo_name(Algo::kHer), "her");
  EXPECT_THROW(algo_from_name("ddpg"), Error);
}

TEST(Act, DeterministicWithoutNoiseAndAlwaysInBounds) {
  const UvdConfig cfg = small_config();
  const AgentNets n = small_nets(cfg);
  const Vec s{{0.1, -0.3, 0.5}}, g{{0.2, 0.4}};
  Rng r1(4), r2(5);
  const Vec a = act(n, s, g, 0.0, r1);
  EXPECT_EQ(a, act(n, s, g, 0.0, r2));
  EXPECT_EQ(a, n.actor.forward(concat({&s, &g})));
  for (int i = 0; i < 200; ++i) {
    const Vec wild = act(n, s, g, 50.0, r1);
    EXPECT_LE(wild.cwiseAbs().maxCoeff(), 1.0);
  }
  Rng r3(9), r4(9);
  EXPECT_EQ(act(n, s, g, 0.3, r3), act(n, s, g, 0.3, r4));
}

TEST(UvdTarget, MatchesIndependentEvaluation) {
  UvdConfig cfg = small_config();
  Rng rng(11);
  for (double lambda : {0.0, 0.3, 1.0}) {
    for (bool averaging : {false, true}) {
      cfg.lambda = lambda;
      cfg.logit_averaging = averaging;
      const AgentNets n = small_nets(cfg, 3);
      const CriticBatch b = random_batch(n, 12, rng);
      const Vec y = uvd_target(n, cfg, b, 0.4);
      for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected_target(n, cfg, b, i, 0.4), 1e-12);
    }
  }
}

TEST(UvdTarget, LambdaOneIsPlainTd) {
  UvdConfig cfg = small_config();
  cfg.lambda = 1.0;
  const AgentNets n = small_nets(cfg);
  Rng rng(2);
  const CriticBatch b = random_batch(n, 20, rng);
  const Vec y = uvd_target(n, cfg, b, 0.0);
  const Vec td = td_target(n, cfg, b);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y[i], td[i]);
}

TEST(UvdTarget, VanishingDensityIsPlainTd) {
  UvdConfig cfg = small_config();
  AgentNets n = small_nets(cfg);
  Rng rng(3);
  CriticBatch b = random_batch(n, 20, rng);
  // Goals far outside the flow's support underflow to zero density.
  b.g.array() += 80.0;
  // Keep critic values non-negative so max(q, 0) = q.
  n.critic1_target.layers.back().bias[0] = 1e3;
  n.critic2_target.layers.back().bias[0] = 1e3;
  TargetStats ts;
  const Vec y = uvd_target(n, cfg, b, 0.0, &ts);
  const Vec td = td_target(n, cfg, b);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y[i], td[i]);
  EXPECT_EQ(ts.density_fallbacks, 0);
  EXPECT_EQ(ts.mean_density, 0.0);
}

TEST(UvdTarget, NeverBelowTdWhenLambdaZero) {
  UvdConfig cfg = small_config();
  Rng rng(8);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const AgentNets n = small_nets(cfg, seed);
    const CriticBatch b = random_batch(n, 32, rng);
    const Vec y = uvd_target(n, cfg, b, 1.0);
    const Vec td = td_target(n, cfg, b);
    for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_GE(y[i], td[i]);
  }
}

TEST(UvdTarget, DensityIsCapped) {
  UvdConfig cfg = small_config();
  const AgentNets n = small_nets(cfg);
  Rng rng(4);
  const CriticBatch b = random_batch(n, 10, rng);
  TargetStats ts;
  const Vec y = uvd_target(n, cfg, b, 1e3, &ts);  // absurd Jacobian: every density saturates
  EXPECT_DOUBLE_EQ(ts.mean_density, cfg.density_cap());
  const Vec td = td_target(n, cfg, b);
  for (Eigen::Index i = 0; i < y.size(); ++i)
    EXPECT_NEAR(y[i], b.reward[i] + cfg.gamma * std::max(cfg.density_cap(), (td[i] - b.reward[i]) / cfg.gamma), 1e-9);
}

TEST(UvdTarget, NonFiniteDensityFallsBackToBootstrap) {
  UvdConfig cfg = small_config();
  AgentNets n = small_nets(cfg);
  n.density_target.params()[0][0] = std::numeric_limits<double>::quiet_NaN();
  Rng rng(5);
  const CriticBatch b = random_batch(n, 9, rng);
  TargetStats ts;
  const Vec y = uvd_target(n, cfg, b, 0.0, &ts);
  EXPECT_EQ(ts.density_fallbacks, 9);
  const Vec td = td_target(n, cfg, b);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y[i], td[i]);
}

TEST(UvdTarget, AbsorbingSuccessors) {
  UvdConfig cfg = small_config();
  const AgentNets n = small_nets(cfg);
  Rng rng(6);
  CriticBatch b = random_batch(n, 4, rng);
  b.terminal = {true, true, false, false};
  b.terminal_value << 1.0, 0.0, 0.0, 0.0;
  const Vec y = uvd_target(n, cfg, b, 0.0);
  EXPECT_DOUBLE_EQ(y[0], b.reward[0] + cfg.gamma);
  EXPECT_DOUBLE_EQ(y[1], b.reward[1]);
  EXPECT_DOUBLE_EQ(td_target(n, cfg, b)[0], b.reward[0] + cfg.gamma);

  // Reward-free batches bootstrap the density of the absorbing state alone.
  b.terminal_density = true;
  const Vec yd = uvd_target(n, cfg, b, 0.0);
  const Mat a2 = policy_actions(n.actor_target, b.s2, b.g);
  const Vec f = density_values(n.density_target, b.g, vstack({&b.s2, &a2, &b.g}), 0.0, false, cfg.density_cap());
  EXPECT_DOUBLE_EQ(yd[0], b.reward[0] + cfg.gamma * f[0]);
  EXPECT_DOUBLE_EQ(yd[1], b.reward[1] + cfg.gamma * f[1]);
  EXPECT_DOUBLE_EQ(yd[2], y[2]);
}

TEST(UvdTarget, RequiresDensity) {
  UvdConfig cfg = small_config();
  const AgentNets n = small_nets(cfg, 1, false);
  Rng rng(1);
  const CriticBatch b = random_batch(n, 2, rng);
  EXPECT_THROW(uvd_target(n, cfg, b, 0.0), Error);
  CriticBatch bad = b;
  bad.reward = Vec::Zero(1);
  EXPECT_THROW(td_target(n, cfg, bad), Error);
}

TEST(DensityValues, AveragingTakesRoot) {
  UvdConfig cfg = small_config();
  const AgentNets n = small_nets(cfg);
  Rng rng(7);
  const CriticBatch b = random_batch(n, 6, rng);
  const Mat cond = vstack({&b.s2, &b.a, &b.g});
  const Vec plain = density_values(n.density, b.g, cond, 0.3, false, 1e9);
  const Vec root = density_values(n.density, b.g, cond, 0.3, true, 1e9);
  for (Eigen::Index i = 0; i < plain.size(); ++i) EXPECT_NEAR(root[i], std::sqrt(plain[i]), 1e-12 * root[i]);
}

TEST(Critic, GradientMatchesFiniteDifferences) {
  const UvdConfig cfg = small_config();
  const AgentNets n = small_nets(cfg, 21);
  Rng rng(21);
  const CriticBatch b = random_batch(n, 1, rng);
  const Vec y{{0.7}};
  Mlp grads = n.critic1.zeros_like();
  critic_loss_and_grad(n.critic1, b, y, grads);
  Mlp probe = n.critic1;
  auto flat = [](const std::vector<std::span<double>>& ps) {
    std::vector<double*> out;
    for (const auto& p : ps)
      for (double& v : p) out.push_back(&v);
    return out;
  };
  const auto slots = flat(probe.params());
  const auto g_slots = flat(grads.params());
  Vec theta(static_cast<Eigen::Index>(slots.size()));
  for (std::size_t k = 0; k < slots.size(); ++k) theta[static_cast<Eigen::Index>(k)] = *slots[k];
  auto loss = [&](const Vec& t) {
    for (std::size_t k = 0; k < slots.size(); ++k) *slots[k] = t[static_cast<Eigen::Index>(k)];
    Mlp scratch = probe.zeros_like();
    return critic_loss_and_grad(probe, b, y, scratch);
  };
  const Vec fd = finite_diff_grad(loss, theta);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double a = *g_slots[k], e = fd[static_cast<Eigen::Index>(k)];
    EXPECT_LE(std::abs(a - e), 1e-4 * std::max(1.0, std::abs(e))) << "param " << k;
  }
}

TEST(Critic, MatchedTargetsLeaveNetworksUnchanged) {
  const UvdConfig cfg = small_config();
  AgentNets n = small_nets(cfg);
  n.critic2 = n.critic1;
  Rng rng(3);
  const CriticBatch b = random_batch(n, 8, rng);
  const Vec y = critic_values(n.critic1, b.s, b.a, b.g);
  AdamState o1 = AdamState::for_params(n.critic1.params(), 1e-2);
  AdamState o2 = AdamState::for_params(n.critic2.params(), 1e-2);
  const Mlp before = n.critic1;
  EXPECT_NEAR(critic_update(n, b, y, o1, o2), 0.0, 1e-28);
  for (std::size_t l = 0; l < before.layers.size(); ++l) {
    EXPECT_EQ(n.critic1.layers[l].weight, before.layers[l].weight);
    EXPECT_EQ(n.critic2.layers[l].bias, before.layers[l].bias);
  }
}

TEST(Critic, LossShrinksOnFrozenTargets) {
  const UvdConfig cfg = small_config();
  AgentNets n = small_nets(cfg, 5);
  Rng rng(5);
  const CriticBatch b = random_batch(n, 64, rng);
  Vec y(64);
  for (Eigen::Index i = 0; i < 64; ++i) y[i] = std::sin(2.0 * b.a(0, i)) + b.g(1, i);
  AdamState o1 = AdamState::for_params(n.critic1.params(), 3e-3);
  AdamState o2 = AdamState::for_params(n.critic2.params(), 3e-3);
  std::vector<double> window(6, 0.0);
  for (int k = 0; k < 600; ++k) window[static_cast<std::size_t>(k / 100)] += critic_update(n, b, y, o1, o2);
  for (std::size_t w = 1; w < window.size(); ++w) EXPECT_LT(window[w], window[w - 1]);
  EXPECT_LT(window.back(), 0.1 * window.front());
}

TEST(Actor, GradientMatchesFiniteDifferences) {
  const UvdConfig cfg = small_config();
  const AgentNets n = small_nets(cfg, 31);
  Rng rng(31);
  const CriticBatch b = random_batch(n, 3, rng);
  const Vec w{{0.5, 1.0, 2.0}};
  Mlp grads = n.actor.zeros_like();
  actor_loss_and_grad(n, b.s, b.g, w, grads);
  AgentNets probe = n;
  std::vector<double*> slots, g_slots;
  for (const auto& p : probe.actor.params())
    for (double& v : p) slots.push_back(&v);
  for (const auto& p : grads.params())
    for (double& v : p) g_slots.push_back(&v);
  Vec theta(static_cast<Eigen::Index>(slots.size()));
  for (std::size_t k = 0; k < slots.size(); ++k) theta[static_cast<Eigen::Index>(k)] = *slots[k];
  auto loss = [&](const Vec& t) {
    for (std::size_t k = 0; k < slots.size(); ++k) *slots[k] = t[static_cast<Eigen::Index>(k)];
    Mlp scratch = probe.actor.zeros_like();
    return actor_loss_and_grad(probe, b.s, b.g, w, scratch);
  };
  const Vec fd = finite_diff_grad(loss, theta);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double a = *g_slots[k], e = fd[static_cast<Eigen::Index>(k)];
    EXPECT_LE(std::abs(a - e), 1e-4 * std::max(1.0, std::abs(e))) << "param " << k;
  }
}

TEST(Actor, CriticConstantInActionGivesZeroGradient) {
  const UvdConfig cfg = small_config();
  AgentNets n = small_nets(cfg);
  // Zero the first-layer columns that read the action.
  n.critic1.layers[0].weight.middleCols(n.state_dim, n.action_dim).setZero();
  Rng rng(1);
  const CriticBatch b = random_batch(n, 10, rng);
  Mlp grads = n.actor.zeros_like();
  actor_loss_and_grad(n, b.s, b.g, Vec(), grads);
  for (const auto& p : grads.params())
    for (double v : p) EXPECT_EQ(v, 0.0);
}

TEST(Actor, ClimbsQuadraticCritic) {
  UvdConfig cfg = small_config();
  cfg.critic_hidden = {64, 64};
  AgentNets n = small_nets(cfg, 13);
  const Vec target{{0.4, -0.6}};
  // Fit the critic to -(a - a*)^2, then run the deterministic policy gradient.
  Rng rng(13);
  AdamState o1 = AdamState::for_params(n.critic1.params(), 2e-3);
  AdamState o2 = AdamState::for_params(n.critic2.params(), 2e-3);
  for (int k = 0; k < 1500; ++k) {
    const CriticBatch b = random_batch(n, 64, rng);
    Vec y(64);
    for (Eigen::Index i = 0; i < 64; ++i) y[i] = -(b.a.col(i) - target).squaredNorm();
    critic_update(n, b, y, o1, o2);
  }
  const CriticBatch probe = random_batch(n, 64, rng);
  auto mean_dist = [&] {
    const Mat a = policy_actions(n.actor, probe.s, probe.g);
    return (a.colwise() - target).colwise().norm().mean();
  };
  const double before = mean_dist();
  AdamState oa = AdamState::for_params(n.actor.params(), 2e-3);
  for (int k = 0; k < 400; ++k) actor_update(n, probe.s, probe.g, oa);
  const double after = mean_dist();
  EXPECT_LT(after, before);
  EXPECT_LT(after, 0.15);
}

TEST(TargetSync, CopiesOnlyOnSchedule) {
  const UvdConfig cfg = small_config();
  AgentNets n = small_nets(cfg);
  n.actor.layers[0].bias.setConstant(0.5);
  n.critic2.layers[0].bias.setConstant(-0.5);
  n.density.params()[0][0] += 1.0;
  EXPECT_FALSE(target_sync(n, 10, 0));
  EXPECT_FALSE(target_sync(n, 10, 5));
  EXPECT_NE(n.actor_target.layers[0].bias, n.actor.layers[0].bias);
  EXPECT_TRUE(target_sync(n, 10, 10));
  EXPECT_EQ(n.actor_target.layers[0].bias, n.actor.layers[0].bias);
  EXPECT_EQ(n.critic2_target.layers[0].bias, n.critic2.layers[0].bias);
  EXPECT_EQ(n.density_target.params()[0][0], n.density.params()[0][0]);
  EXPECT_TRUE(target_sync(n, 10, 30));
  EXPECT_THROW(target_sync(n, 0, 1), Error);
}

TEST(GoalAgent, IterationsAreInterchangeableAndDeterministic) {
  UvdConfig cfg = small_config();
  cfg.warmup_episodes = 2;
  cfg.updates_per_iteration = 2;
  cfg.density_updates_per_iteration = 2;
  for (Algo algo : {Algo::kTd3, Algo::kHer, Algo::kUvd}) {
    GoalAgent a(std::make_unique<SlideEnv>(SlideConfig{}), algo, cfg, 42);
    GoalAgent b(std::make_unique<SlideEnv>(SlideConfig{}), algo, cfg, 42);
    for (int i = 0; i < 12; ++i) {
      const GoalAgent::Metrics ma = a.iterate(), mb = b.iterate();
      EXPECT_EQ(ma.iteration, i + 1);
      EXPECT_EQ(ma.critic_loss, mb.critic_loss);
      EXPECT_EQ(ma.actor_objective, mb.actor_objective);
      EXPECT_EQ(ma.density_nll, mb.density_nll);
      EXPECT_TRUE(std::isfinite(ma.critic_loss));
    }
    EXPECT_EQ(a.env_steps(), 12 * SlideConfig{}.horizon);
    EXPECT_GT(a.updates(), 0);
    const Vec s{{0.1, 0.1, 0.0, 0.0, 0.0}}, g{{0.5, 0.5}};
    EXPECT_EQ(a.policy(s, g), b.policy(s, g));
    Rng e1(3), e2(3);
    EXPECT_EQ(a.evaluate(5, e1), b.evaluate(5, e2));
  }
  GoalAgent her(std::make_unique<SlideEnv>(SlideConfig{}), Algo::kHer, cfg, 1);
  EXPECT_THROW(her.uvd_iteration(), Error);
  Rng rng(1);
  EXPECT_THROW(her.evaluate(0, rng), Error);
}

TEST(GoalAgent, UvdSolvesDeterministicCliffwalk) {
  CliffWalkConfig cw;
  cw.slip = 0.0;
  UvdConfig cfg;
  cfg.gamma = 0.95;
  cfg.batch = 64;
  cfg.random_eps = 0.3;
  cfg.actor_hidden = cfg.critic_hidden = cfg.flow_hidden = {32, 32};
  GoalAgent agent(std::make_unique<CliffWalkEnv>(cw, 20), Algo::kUvd, cfg, 7);
  for (int i = 0; i < 800; ++i) agent.iterate();
  Rng rng(5);
  EXPECT_GE(agent.evaluate(200, rng), 0.95);
}

}  // namespace
}  // namespace vdl
