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

#include "vdlab/vdi.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace vdl {
namespace {

VdiConfig small_config() {
  VdiConfig cfg;
  cfg.actor_hidden = {16, 16};
  cfg.critic_hidden = {16, 16};
  cfg.flow_hidden = {16};
  cfg.flow_layers = 2;
  cfg.batch = 16;
  return cfg;
}

VdiNets small_nets(const VdiConfig& cfg, std::uint64_t seed = 1) {
  Rng rng(seed);
  return VdiNets::make(2, 2, 2, cfg, rng);
}

Mat uniform_mat(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

VdiBatch random_batch(const VdiNets& n, int size, Rng& rng) {
  VdiBatch b;
  b.s = uniform_mat(n.state_dim, size, rng);
  b.a = uniform_mat(n.action_dim, size, rng);
  b.s2 = uniform_mat(n.state_dim, size, rng);
  b.goal = uniform_mat(n.goal_dim, size, rng);
  return b;
}

// Straight-line evaluation of the VDI regression target for one sample.
double expected_target(const VdiNets& n, const VdiConfig& cfg, const VdiBatch& b, Eigen::Index i) {
  const Vec s = b.s.col(i), a = b.a.col(i), s2 = b.s2.col(i), g = b.goal.col(i);
  const Vec a2 = n.actor_target.forward(s2);
  const double q = std::min(n.critic1_target.forward(concat({&s2, &a2, &g}))[0],
                            n.critic2_target.forward(concat({&s2, &a2, &g}))[0]);
  const LogDensity ld = n.future_target.logpdf(g, concat({&s, &a}));
  EXPECT_TRUE(ld.averaged);
  const double f = std::min(std::exp(ld.value), cfg.density_cap());
  const double ge = std::pow(cfg.gamma, 1.0 / n.goal_dim);
  return cfg.lambda * ge * q + (1.0 - cfg.lambda) * std::max(f, ge * q);
}

std::vector<double*> slots_of(std::vector<std::span<double>> ps) {
  std::vector<double*> out;
  for (const auto& p : ps)
    for (double& v : p) out.push_back(&v);
  return out;
}

TEST(DemoWeights, UniformDensityGivesUnitWeights) {
  const Vec w = demo_weights(Vec::Constant(7, -1.3), WeightConfig{});
  for (Eigen::Index i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], 1.0, 1e-15);
}

TEST(DemoWeights, RareDemoClipsAtBoundBeforeRenormalizing) {
  const int n = 10;
  Vec ld = Vec::Constant(n, 0.0);
  ld[3] = -std::log(100.0);
  const Vec w = demo_weights(ld, WeightConfig{5.0});
  // Mean-one weights are 1000/109 for the rare demo and 10/109 elsewhere;
  // the rare one clips to 5 and the vector is rescaled to mean one again.
  const double common = 10.0 / 109.0;
  const double scale = n / (5.0 + (n - 1) * common);
  EXPECT_NEAR(w[3], 5.0 * scale, 1e-12);
  EXPECT_NEAR(w[0], common * scale, 1e-12);
  EXPECT_NEAR(w[3] / w[0], 5.0 / common, 1e-9);
  EXPECT_NEAR(w.mean(), 1.0, 1e-12);
}

TEST(DemoWeights, InvariantToScalingAllDensities) {
  Rng rng(4);
  Vec ld(12);
  for (Eigen::Index i = 0; i < ld.size(); ++i) ld[i] = rng.uniform(-4.0, 2.0);
  const Vec a = demo_weights(ld, WeightConfig{3.0});
  const Vec b = demo_weights((ld.array() + std::log(37.5)).matrix(), WeightConfig{3.0});
  for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(DemoWeights, NonFiniteDensities) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool fallback = false;
  const Vec all = demo_weights(Vec::Constant(4, nan), WeightConfig{}, &fallback);
  EXPECT_TRUE(fallback);
  EXPECT_EQ(all, Vec::Ones(4));

  Vec some{{0.0, nan, -1.0}};
  const Vec w = demo_weights(some, WeightConfig{100.0}, &fallback);
  EXPECT_FALSE(fallback);
  EXPECT_DOUBLE_EQ(w[1], w[2]);
  EXPECT_GT(w[1], w[0]);
}

TEST(DemoWeights, RejectsBadInput) {
  EXPECT_THROW(demo_weights(Vec(), WeightConfig{}), Error);
  EXPECT_THROW(demo_weights(Vec::Zero(3), WeightConfig{0.5}), Error);
}

TEST(VdiConfig, Validates) {
  VdiConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.lambda = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = VdiConfig{};
  cfg.weights.bound = 0.9;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_NEAR(VdiConfig{}.gamma_eff(2), std::sqrt(0.98), 1e-15);
}

TEST(VdiTarget, MatchesIndependentEvaluation) {
  VdiConfig cfg = small_config();
  cfg.lambda = 0.3;
  const VdiNets n = small_nets(cfg, 7);
  Rng rng(7);
  const VdiBatch b = random_batch(n, 9, rng);
  const Vec y = vdi_target(n, cfg, b, 0.0);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected_target(n, cfg, b, i), 1e-10);
}

TEST(VdiTarget, LambdaOneIsPureBootstrap) {
  VdiConfig cfg = small_config();
  cfg.lambda = 1.0;
  const VdiNets n = small_nets(cfg, 8);
  Rng rng(8);
  const VdiBatch b = random_batch(n, 12, rng);
  const Vec y = vdi_target(n, cfg, b, 0.0);
  const Mat a2 = n.actor_target.forward(b.s2);
  const Vec q1 = n.critic1_target.forward(vstack({&b.s2, &a2, &b.goal})).row(0).transpose();
  const Vec q2 = n.critic2_target.forward(vstack({&b.s2, &a2, &b.goal})).row(0).transpose();
  const Vec expect = cfg.gamma_eff(2) * q1.cwiseMin(q2);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expect[i], 1e-12);
}

TEST(VdiTarget, NeverBelowDiscountedBootstrap) {
  const VdiConfig cfg = small_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    VdiNets n = small_nets(cfg, seed);
    // Push target critics up so the max picks both branches across samples.
    n.critic1_target.layers.back().bias[0] += 0.2 * static_cast<double>(seed);
    n.critic2_target.layers.back().bias[0] += 0.2 * static_cast<double>(seed);
    Rng rng(seed);
    const VdiBatch b = random_batch(n, 20, rng);
    TargetStats ts;
    const Vec y = vdi_target(n, cfg, b, 0.0, &ts);
    const Mat a2 = n.actor_target.forward(b.s2);
    const Vec q1 = n.critic1_target.forward(vstack({&b.s2, &a2, &b.goal})).row(0).transpose();
    const Vec q2 = n.critic2_target.forward(vstack({&b.s2, &a2, &b.goal})).row(0).transpose();
    for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_GE(y[i], cfg.gamma_eff(2) * std::min(q1[i], q2[i]));
    EXPECT_EQ(ts.density_fallbacks, 0);
    EXPECT_GT(ts.mean_density, 0.0);
  }
}

TEST(VdiTarget, NonFiniteDensityFallsBackToBootstrap) {
  const VdiConfig cfg = small_config();
  VdiNets n = small_nets(cfg, 9);
  n.future_target.layers()[0].shift_net.layers.back().bias[0] = std::numeric_limits<double>::quiet_NaN();
  Rng rng(9);
  const VdiBatch b = random_batch(n, 6, rng);
  TargetStats ts;
  const Vec y = vdi_target(n, cfg, b, 0.0, &ts);
  EXPECT_EQ(ts.density_fallbacks, 6);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_TRUE(std::isfinite(y[i]));
}

TEST(VdiTabular, ThreeStateChainFixedPoint) {
  // Deterministic chain 0 -> 1 -> 2 -> 2, one action. F is the one-step
  // density of reaching each goal, so anything further away than one step
  // can only come from the bootstrap.
  const Mat P{{0, 1, 0}, {0, 0, 1}, {0, 0, 1}};
  const Mat F{{0, 1, 0}, {0, 0, 1}, {0, 0, 1}};
  const double gamma = 0.9;
  const Mat q = vdi_tabular_fixed_point(F, P, gamma, 0.0);
  const Mat expect{{0, 1, gamma}, {0, 0, 1}, {0, 0, 1}};
  EXPECT_LT((q - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((q - F.cwiseMax(gamma * P * q)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VdiTabular, MaxBackupDominatesPolicyEvaluation) {
  // Random chain with F from a truncated estimate: the fixed point sits above
  // both F and the lambda = 1 fixed point (which is zero here).
  Rng rng(12);
  const int n = 6;
  Mat P = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < n; ++j) total += (P(i, j) = rng.uniform());
    P.row(i) /= total;
  }
  Mat F = Mat::Zero(n, 3);
  for (Eigen::Index i = 0; i < F.size(); ++i) F.data()[i] = rng.uniform();
  const Mat q0 = vdi_tabular_fixed_point(F, P, 0.8, 0.0);
  const Mat qh = vdi_tabular_fixed_point(F, P, 0.8, 0.5);
  EXPECT_TRUE((q0.array() >= F.array() - 1e-12).all());
  EXPECT_TRUE((q0.array() >= qh.array() - 1e-12).all());
  EXPECT_LT(vdi_tabular_fixed_point(F, P, 0.8, 1.0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(vdi_tabular_fixed_point(F, P, 0.999999, 0.0, 3), Error);
}

TEST(VdiCritic, UpdateMovesTowardTargets) {
  const VdiConfig cfg = small_config();
  VdiNets n = small_nets(cfg, 14);
  Rng rng(14);
  const VdiBatch b = random_batch(n, 32, rng);
  Vec y(32);
  for (Eigen::Index i = 0; i < 32; ++i) y[i] = std::exp(-(b.s.col(i) - b.goal.col(i)).squaredNorm());
  AdamState o1 = AdamState::for_params(n.critic1.params(), 3e-3);
  AdamState o2 = AdamState::for_params(n.critic2.params(), 3e-3);
  const double first = vdi_critic_update(n, b, y, o1, o2);
  double last = first;
  for (int k = 0; k < 300; ++k) last = vdi_critic_update(n, b, y, o1, o2);
  EXPECT_LT(last, 0.2 * first);
}

TEST(VdiActor, GradientMatchesFiniteDifferences) {
  const VdiConfig cfg = small_config();
  const VdiNets n = small_nets(cfg, 31);
  Rng rng(31);
  const Mat s = uniform_mat(2, 3, rng), g = uniform_mat(2, 3, rng);
  const Vec w{{0.5, 1.0, 2.0}};
  for (double l2 : {0.0, 0.7}) {
    Mlp grads = n.actor.zeros_like();
    vdi_actor_loss_and_grad(n, s, g, w, grads, l2);
    VdiNets probe = n;
    const auto slots = slots_of(probe.actor.params());
    const auto g_slots = slots_of(grads.params());
    Vec theta(static_cast<Eigen::Index>(slots.size()));
    for (std::size_t k = 0; k < slots.size(); ++k) theta[static_cast<Eigen::Index>(k)] = *slots[k];
    auto loss = [&](const Vec& t) {
      for (std::size_t k = 0; k < slots.size(); ++k) *slots[k] = t[static_cast<Eigen::Index>(k)];
      Mlp scratch = probe.actor.zeros_like();
      return vdi_actor_loss_and_grad(probe, s, g, w, scratch, l2);
    };
    const Vec fd = finite_diff_grad(loss, theta);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const double a = *g_slots[k], e = fd[static_cast<Eigen::Index>(k)];
      EXPECT_LE(std::abs(a - e), 1e-4 * std::max(1.0, std::abs(e))) << "l2 " << l2 << " param " << k;
    }
  }
}

TEST(VdiActor, CriticConstantInActionGivesZeroGradient) {
  const VdiConfig cfg = small_config();
  VdiNets n = small_nets(cfg);
  n.critic1.layers[0].weight.middleCols(n.state_dim, n.action_dim).setZero();
  Rng rng(1);
  const Mat s = uniform_mat(2, 10, rng), g = uniform_mat(2, 10, rng);
  Mlp grads = n.actor.zeros_like();
  vdi_actor_loss_and_grad(n, s, g, Vec(), grads);
  for (const auto& p : grads.params())
    for (double v : p) EXPECT_EQ(v, 0.0);
}

TEST(VdiActor, SingleDemoSteersTowardIt) {
  // One demo state: its weight is 1 and the update is the plain
  // goal-conditioned policy gradient toward that state.
  const Vec demo{{0.3, -0.4}};
  const Vec w1 = demo_weights(Vec::Constant(1, -2.0), WeightConfig{});
  ASSERT_DOUBLE_EQ(w1[0], 1.0);

  VdiConfig cfg = small_config();
  cfg.critic_hidden = {64, 64};
  VdiNets n = small_nets(cfg, 13);
  Rng rng(13);
  AdamState o1 = AdamState::for_params(n.critic1.params(), 2e-3);
  AdamState o2 = AdamState::for_params(n.critic2.params(), 2e-3);
  for (int k = 0; k < 2000; ++k) {
    VdiBatch b = random_batch(n, 64, rng);
    b.goal = demo.replicate(1, 64);
    Vec y(64);
    for (Eigen::Index i = 0; i < 64; ++i) y[i] = -(b.s.col(i) + 0.2 * b.a.col(i) - demo).squaredNorm();
    vdi_critic_update(n, b, y, o1, o2);
  }
  const Mat s = 0.4 * uniform_mat(2, 64, rng);
  const Mat goals = demo.replicate(1, 64);
  const Vec w = Vec::Constant(64, w1[0]);
  Mlp ga = n.actor.zeros_like(), gb = n.actor.zeros_like();
  EXPECT_DOUBLE_EQ(vdi_actor_loss_and_grad(n, s, goals, w, ga), vdi_actor_loss_and_grad(n, s, goals, Vec(), gb));

  AdamState oa = AdamState::for_params(n.actor.params(), 2e-3);
  for (int k = 0; k < 400; ++k) vdi_actor_update(n, s, goals, w, oa);
  const Mat a = n.actor.forward(s);
  double cos_sum = 0.0;
  for (Eigen::Index i = 0; i < s.cols(); ++i) {
    const Vec to_demo = demo - s.col(i);
    cos_sum += a.col(i).dot(to_demo) / (a.col(i).norm() * to_demo.norm() + 1e-12);
  }
  EXPECT_GT(cos_sum / static_cast<double>(s.cols()), 0.9);
}

TEST(VdiTargetSync, CopiesEveryNetworkOnSchedule) {
  const VdiConfig cfg = small_config();
  VdiNets n = small_nets(cfg);
  n.actor.layers[0].bias[0] += 1.0;
  n.future.layers()[0].shift_net.layers[0].bias[0] += 1.0;
  n.state_density.layers()[0].shift_net.layers[0].bias[0] += 1.0;
  EXPECT_FALSE(vdi_target_sync(n, 5, 4));
  EXPECT_NE(n.actor_target.layers[0].bias, n.actor.layers[0].bias);
  EXPECT_TRUE(vdi_target_sync(n, 5, 10));
  EXPECT_EQ(n.actor_target.layers[0].bias, n.actor.layers[0].bias);
  EXPECT_EQ(n.future_target.layers()[0].shift_net.layers[0].bias, n.future.layers()[0].shift_net.layers[0].bias);
  EXPECT_EQ(n.state_density_target.layers()[0].shift_net.layers[0].bias,
            n.state_density.layers()[0].shift_net.layers[0].bias);
}

TEST(StateDensity, ConcentratesWhereTheAgentIsStuck) {
  Rng rng(3);
  FlowSpec spec;
  spec.dim = 2;
  spec.cond_dim = 0;
  spec.num_layers = 4;
  spec.hidden = {32, 32};
  spec.logit_averaging = true;
  Flow d = Flow::make(spec, rng);
  AdamState opt = AdamState::for_params(d.params(), 3e-3);
  const Vec stuck{{0.4, -0.2}};
  const Mat x = stuck.replicate(1, 64);
  const Mat none(0, 64);
  for (int k = 0; k < 800; ++k) flow_fit_step(d, x, none, 0.1, 1e-5, opt, rng);
  const Mat probe{{0.4, -0.4}, {-0.2, 0.5}};
  const Vec lp = d.log_prob(probe, Mat(0, 2));
  EXPECT_GE(lp[0] - lp[1], 2.0);
}

TEST(Metrics, NearestDistanceAndCoverage) {
  const std::vector<Vec> demos{Vec{{0.0, 0.0}}, Vec{{1.0, 0.0}}};
  const std::vector<Vec> on_both{Vec{{0.0, 0.0}}, Vec{{1.0, 0.05}}};
  EXPECT_NEAR(mean_nearest_distance(on_both, demos), 0.025, 1e-15);
  EXPECT_NEAR(demo_coverage(on_both, demos, 0.1), 1.0, 1e-15);
  const std::vector<Vec> parked(4, Vec{{0.02, 0.0}});
  EXPECT_NEAR(demo_coverage(parked, demos, 0.1), 0.5, 1e-15);
  const std::vector<Vec> away(3, Vec{{0.5, 0.5}});
  EXPECT_EQ(demo_coverage(away, demos, 0.1), 0.0);
  EXPECT_THROW(mean_nearest_distance({}, demos), Error);
}

TEST(VdiAgent, DeterministicPerSeedAndChecksDemos) {
  PointMassConfig pc;
  pc.horizon = 40;
  Rng dr(2);
  const DemoSet demos = expert_demos(pc, 1, 20, false, dr);
  VdiConfig cfg = small_config();
  cfg.warmup_episodes = 1;
  cfg.updates_per_iteration = 3;
  cfg.density_updates_per_iteration = 2;
  VdiAgent a(pc, demos, cfg, 5), b(pc, demos, cfg, 5);
  for (int k = 0; k < 4; ++k) {
    const auto ma = a.iterate(), mb = b.iterate();
    EXPECT_EQ(ma.critic_loss, mb.critic_loss);
    EXPECT_EQ(ma.future_nll, mb.future_nll);
    EXPECT_EQ(ma.env_steps, 40 * (k + 1));
  }
  EXPECT_EQ(a.demo_weight_vector(), b.demo_weight_vector());
  Rng e1(1), e2(1);
  const ImitationScore sa = a.evaluate(2, e1), sb = b.evaluate(2, e2);
  EXPECT_EQ(sa.coverage, sb.coverage);
  EXPECT_EQ(sa.nearest_demo_distance, sb.nearest_demo_distance);

  VdiConfig aug = cfg;
  aug.augment_prev_action = true;
  EXPECT_THROW(VdiAgent(pc, demos, aug, 1), Error);
  EXPECT_THROW(VdiAgent(pc, DemoSet{}, cfg, 1), Error);
}

TEST(VdiAgent, AblationUsesUniformWeights) {
  PointMassConfig pc;
  pc.horizon = 30;
  Rng dr(2);
  VdiConfig cfg = small_config();
  cfg.inverse_density = false;
  VdiAgent a(pc, expert_demos(pc, 1, 10, false, dr), cfg, 1);
  a.iterate();
  EXPECT_EQ(a.demo_weight_vector(), Vec::Ones(static_cast<Eigen::Index>(a.demos().states.size())));
}

}  // namespace
}  // namespace vdl
