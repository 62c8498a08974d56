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

#include <algorithm>
#include <cmath>
#include <limits>

namespace vdl {

void WeightConfig::validate() const {
  VDL_REQUIRE(std::isfinite(bound) && bound >= 1.0, ErrorCode::kConfig, "weight bound must be at least 1");
}

Vec demo_weights(const Vec& log_density, const WeightConfig& wc, bool* fallback) {
  wc.validate();
  const Eigen::Index n = log_density.size();
  VDL_REQUIRE(n > 0, ErrorCode::kInvalidArgument, "demo_weights: no demonstrations");
  if (fallback) *fallback = false;
  // Work with -log d shifted by its maximum so the exponentials stay finite.
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::isfinite(log_density[i])) top = std::max(top, -log_density[i]);
  if (!std::isfinite(top)) {
    if (fallback) *fallback = true;
    return Vec::Ones(n);
  }
  Vec w(n);
  double biggest = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    w[i] = std::isfinite(log_density[i]) ? std::exp(-log_density[i] - top) : 0.0;
    biggest = std::max(biggest, w[i]);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(log_density[i])) w[i] = biggest;
  w *= static_cast<double>(n) / w.sum();
  w = w.cwiseMin(wc.bound);
  w *= static_cast<double>(n) / w.sum();
  return w;
}

void VdiConfig::validate() const {
  auto req = [](bool ok, const char* msg) { VDL_REQUIRE(ok, ErrorCode::kConfig, msg); };
  req(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
  req(truncation >= 0, "truncation must be non-negative");
  req(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0, 1]");
  req(spatial_sigma >= 0.0 && explore_sigma >= 0.0, "noise scales must be non-negative");
  req(target_sync > 0 && batch > 0, "target_sync and batch must be positive");
  req(flow_layers >= 1, "flow needs at least one layer");
  req(actor_lr > 0.0 && critic_lr > 0.0 && flow_lr > 0.0, "learning rates must be positive");
  req(flow_l2 >= 0.0, "flow_l2 must be non-negative");
  req(long_capacity > 0 && short_capacity > 0, "buffer capacities must be positive");
  req(updates_per_iteration >= 0 && density_updates_per_iteration >= 0 && warmup_episodes >= 0,
      "update counts must be non-negative");
  weights.validate();
}

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

Flow make_flow(int dim, int cond_dim, const VdiConfig& cfg, Rng& rng) {
  FlowSpec spec;
  spec.dim = dim;
  spec.cond_dim = cond_dim;
  spec.num_layers = cfg.flow_layers;
  spec.hidden = cfg.flow_hidden;
  spec.logit_averaging = true;
  return Flow::make(spec, rng);
}

Vec q_values(const Mlp& critic, const Mat& s, const Mat& a, const Mat& goal) {
  return critic.forward(vstack({&s, &a, &goal})).row(0).transpose();
}

CriticBatch as_critic_batch(const VdiBatch& b) {
  const Eigen::Index n = b.s.cols();
  VDL_CONTRACT(n > 0, "vdi batch is empty");
  VDL_CONTRACT(b.a.cols() == n && b.s2.cols() == n && b.goal.cols() == n, "vdi batch columns disagree");
  CriticBatch c;
  c.s = b.s;
  c.a = b.a;
  c.s2 = b.s2;
  c.g = b.goal;
  c.reward = Vec::Zero(n);
  c.terminal.assign(static_cast<std::size_t>(n), false);
  c.terminal_value = Vec::Zero(n);
  return c;
}

}  // namespace

VdiNets VdiNets::make(int state_dim, int action_dim, int goal_dim, const VdiConfig& cfg, Rng& rng) {
  VdiNets n;
  n.state_dim = state_dim;
  n.action_dim = action_dim;
  n.goal_dim = goal_dim;
  n.actor = Mlp::make(layer_sizes(state_dim, cfg.actor_hidden, action_dim), Activation::kTanh, rng);
  const auto critic_sizes = layer_sizes(state_dim + action_dim + goal_dim, cfg.critic_hidden, 1);
  n.critic1 = Mlp::make(critic_sizes, Activation::kLinear, rng);
  n.critic2 = Mlp::make(critic_sizes, Activation::kLinear, rng);
  n.actor_target = n.actor;
  n.critic1_target = n.critic1;
  n.critic2_target = n.critic2;
  n.future = make_flow(goal_dim, state_dim + action_dim, cfg, rng);
  n.future_target = n.future;
  n.state_density = make_flow(goal_dim, 0, cfg, rng);
  n.state_density_target = n.state_density;
  return n;
}

Vec vdi_target(const VdiNets& nets, const VdiConfig& cfg, const VdiBatch& b, double goal_log_jacobian,
               TargetStats* stats) {
  const CriticBatch c = as_critic_batch(b);
  const double ge = cfg.gamma_eff(nets.goal_dim);
  const Mat a2 = nets.actor_target.forward(c.s2);
  const Vec qt = q_values(nets.critic1_target, c.s2, a2, c.g).cwiseMin(q_values(nets.critic2_target, c.s2, a2, c.g));
  const Mat cond = vstack({&c.s, &c.a});
  const Vec f = density_values(nets.future_target, c.g, cond, goal_log_jacobian, true, cfg.density_cap());
  Vec y(qt.size());
  int fallbacks = 0, counted = 0;
  double fsum = 0.0;
  for (Eigen::Index i = 0; i < qt.size(); ++i) {
    const double boot = ge * qt[i];
    if (std::isfinite(f[i])) {
      y[i] = cfg.lambda * boot + (1.0 - cfg.lambda) * std::max(f[i], boot);
      fsum += f[i];
      ++counted;
    } else {
      y[i] = boot;
      ++fallbacks;
    }
  }
  if (stats) {
    stats->density_fallbacks += fallbacks;
    stats->mean_density = counted > 0 ? fsum / counted : 0.0;
  }
  return y;
}

double vdi_critic_update(VdiNets& nets, const VdiBatch& b, const Vec& targets, AdamState& opt1, AdamState& opt2) {
  const CriticBatch c = as_critic_batch(b);
  double total = 0.0;
  for (auto [critic, opt] : {std::pair{&nets.critic1, &opt1}, std::pair{&nets.critic2, &opt2}}) {
    Mlp grads = critic->zeros_like();
    total += critic_loss_and_grad(*critic, c, targets, grads);
    adam_step(*critic, grads, *opt);
  }
  return 0.5 * total;
}

double vdi_actor_loss_and_grad(const VdiNets& nets, const Mat& s, const Mat& goal, const Vec& weights, Mlp& grads,
                               double action_l2) {
  const Eigen::Index n = s.cols();
  VDL_CONTRACT(n > 0 && goal.cols() == n, "vdi actor batch is empty or misaligned");
  VDL_CONTRACT(weights.size() == 0 || weights.size() == n, "vdi actor weights count");
  const Vec w = weights.size() ? weights : Vec(Vec::Ones(n));
  Mlp::Tape actor_tape, critic_tape;
  const Mat a = nets.actor.forward(s, actor_tape);
  const Mat& q = nets.critic1.forward(vstack({&s, &a, &goal}), critic_tape);
  const double nd = static_cast<double>(n);
  const double loss = -(q.row(0).transpose().cwiseProduct(w)).sum() / nd + action_l2 * a.squaredNorm() / nd;
  const Mat upstream = -w.transpose() / nd;
  const Mat d_in = nets.critic1.backward(critic_tape, upstream, nullptr);
  const Mat d_a = d_in.middleRows(nets.state_dim, nets.action_dim) + (2.0 * action_l2 / nd) * a;
  nets.actor.backward(actor_tape, d_a, &grads);
  return loss;
}

double vdi_actor_update(VdiNets& nets, const Mat& s, const Mat& goal, const Vec& weights, AdamState& opt,
                        double action_l2) {
  Mlp grads = nets.actor.zeros_like();
  const double loss = vdi_actor_loss_and_grad(nets, s, goal, weights, grads, action_l2);
  adam_step(nets.actor, grads, opt);
  return -loss;
}

bool vdi_target_sync(VdiNets& nets, int period, long step) {
  VDL_CONTRACT(period > 0, "vdi_target_sync: period must be positive");
  if (step <= 0 || step % period != 0) return false;
  nets.actor_target = nets.actor;
  nets.critic1_target = nets.critic1;
  nets.critic2_target = nets.critic2;
  nets.future_target = nets.future;
  nets.state_density_target = nets.state_density;
  return true;
}

Mat vdi_tabular_fixed_point(const Mat& F, const Mat& P, double gamma, double lambda, int max_iterations,
                            double tolerance) {
  VDL_REQUIRE(P.rows() == P.cols() && P.rows() == F.rows(), ErrorCode::kInvalidArgument,
              "vdi_tabular_fixed_point: shape mismatch");
  VDL_REQUIRE(gamma >= 0.0 && gamma < 1.0 && lambda >= 0.0 && lambda <= 1.0, ErrorCode::kInvalidArgument,
              "vdi_tabular_fixed_point: gamma in [0, 1) and lambda in [0, 1]");
  Mat q = F;
  double residual = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    const Mat boot = gamma * (P * q);
    const Mat next = lambda * boot + (1.0 - lambda) * F.cwiseMax(boot);
    residual = (next - q).cwiseAbs().maxCoeff();
    q = next;
    if (residual <= tolerance) return q;
  }
  throw Error(ErrorCode::kNumeric,
              "vdi_tabular_fixed_point: no convergence, residual " + std::to_string(residual));
}

namespace {

// Index of the nearest demo and its distance.
std::pair<std::size_t, double> nearest(const Vec& p, const std::vector<Vec>& demos) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const double d = (p - demos[i]).norm();
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return {best, bd};
}

}  // namespace

double mean_nearest_distance(const std::vector<Vec>& positions, const std::vector<Vec>& demo_positions) {
  VDL_REQUIRE(!positions.empty() && !demo_positions.empty(), ErrorCode::kInvalidArgument,
              "mean_nearest_distance: empty input");
  double total = 0.0;
  for (const Vec& p : positions) total += nearest(p, demo_positions).second;
  return total / static_cast<double>(positions.size());
}

double demo_coverage(const std::vector<Vec>& positions, const std::vector<Vec>& demo_positions, double radius) {
  VDL_REQUIRE(!positions.empty() && !demo_positions.empty(), ErrorCode::kInvalidArgument,
              "demo_coverage: empty input");
  std::vector<double> p(demo_positions.size(), 0.0);
  for (const Vec& x : positions) {
    const auto [i, d] = nearest(x, demo_positions);
    if (d <= radius) p[i] += 1.0 / static_cast<double>(positions.size());
  }
  const double share = 1.0 / static_cast<double>(demo_positions.size());
  double c = 0.0;
  for (double v : p) c += std::min(v, share);
  return c;
}

// ---------------------------------------------------------------------------

namespace {

double log_jacobian(const Ranges& r) {
  double j = 0.0;
  for (Eigen::Index i = 0; i < r.lo.size(); ++i) {
    const double span = r.hi[i] - r.lo[i];
    if (span > 0.0) j += std::log(2.0 / span);
  }
  return j;
}

Ranges goal_ranges_for(const Mat& state_bounds, int action_dim, bool augmented) {
  Ranges s = ranges_from_bounds(state_bounds);
  if (!augmented) return s;
  Ranges g;
  g.lo = Vec::Constant(action_dim + s.lo.size(), -1.0);
  g.hi = Vec::Constant(action_dim + s.hi.size(), 1.0);
  g.lo.tail(s.lo.size()) = s.lo;
  g.hi.tail(s.hi.size()) = s.hi;
  return g;
}

Vec random_action(int dim, Rng& rng) {
  Vec a(dim);
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(-1.0, 1.0);
  return a;
}

}  // namespace

VdiAgent::VdiAgent(const PointMassConfig& env, DemoSet demos, const VdiConfig& cfg, std::uint64_t seed)
    : env_(env),
      demos_(std::move(demos)),
      cfg_(cfg),
      rng_(seed),
      long_buf_(cfg.long_capacity, BufferRole::kLong),
      short_buf_(cfg.short_capacity, BufferRole::kShort) {
  cfg_.validate();
  VDL_REQUIRE(!demos_.states.empty(), ErrorCode::kInvalidArgument, "VdiAgent: no demonstration states");
  VDL_REQUIRE(demos_.augmented == cfg_.augment_prev_action, ErrorCode::kConfig,
              "VdiAgent: demo augmentation disagrees with vdi.augment_prev_action");
  const int sd = env_.state_dim(), ad = env_.action_dim();
  const int gd = cfg_.augment_prev_action ? sd + ad : sd;
  for (const Vec& d : demos_.states)
    VDL_REQUIRE(d.size() == gd, ErrorCode::kInvalidArgument, "VdiAgent: demo state has the wrong size");
  Rng init = rng_.fork(1);
  nets_ = VdiNets::make(sd, ad, gd, cfg_, init);
  actor_opt_ = AdamState::for_params(nets_.actor.params(), cfg_.actor_lr);
  critic1_opt_ = AdamState::for_params(nets_.critic1.params(), cfg_.critic_lr);
  critic2_opt_ = AdamState::for_params(nets_.critic2.params(), cfg_.critic_lr);
  future_opt_ = AdamState::for_params(nets_.future.params(), cfg_.flow_lr);
  state_opt_ = AdamState::for_params(nets_.state_density.params(), cfg_.flow_lr);
  state_ranges_ = ranges_from_bounds(env_.state_bounds());
  goal_ranges_ = goal_ranges_for(env_.state_bounds(), ad, cfg_.augment_prev_action);
  goal_log_jac_ = log_jacobian(goal_ranges_);
  demo_goals_.resize(gd, static_cast<Eigen::Index>(demos_.states.size()));
  for (std::size_t i = 0; i < demos_.states.size(); ++i)
    demo_goals_.col(static_cast<Eigen::Index>(i)) = normalize_state(demos_.states[i], goal_ranges_);
}

Vec VdiAgent::goal_features(const Vec& prev_action, const Vec& state) const {
  return cfg_.augment_prev_action ? concat({&prev_action, &state}) : state;
}

Vec VdiAgent::policy(const Vec& state) const { return nets_.actor.forward(norm_state(state)); }

std::vector<Vec> VdiAgent::demo_positions() const {
  std::vector<Vec> out;
  const int sd = env_.state_dim();
  for (const Vec& d : demos_.states) out.push_back(d.tail(sd));
  return out;
}

Vec VdiAgent::demo_weight_vector() const {
  const Eigen::Index n = demo_goals_.cols();
  if (!cfg_.inverse_density) return Vec::Ones(n);
  Vec ld(n);
  const Mat none(0, n);
  try {
    ld = nets_.state_density.log_prob(demo_goals_, none);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNumeric) throw;
    ld.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return demo_weights(ld, cfg_.weights);
}

Episode VdiAgent::collect(bool random_actions) {
  Episode ep;
  Vec s = env_.reset(rng_);
  ep.goal = Vec::Zero(nets_.goal_dim);
  ep.states.push_back(s);
  for (int t = 0; t < env_.horizon(); ++t) {
    Vec a;
    if (random_actions) {
      a = random_action(env_.action_dim(), rng_);
    } else {
      a = nets_.actor.forward(norm_state(s));
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += cfg_.explore_sigma * rng_.normal();
      a = a.cwiseMax(-1.0).cwiseMin(1.0);
    }
    const StepResult r = env_.step(a, rng_);
    s = r.next_state;
    ep.actions.push_back(a);
    ep.states.push_back(s);
    ep.achieved.push_back(goal_features(a, s));
    ++env_steps_;
    if (r.done) break;
  }
  ep.achieved.push_back(ep.achieved.back());
  return ep;
}

double VdiAgent::fit_future() {
  short_buf_.require_role(BufferRole::kShort, "future density");
  const auto n = static_cast<Eigen::Index>(cfg_.batch);
  const int sd = nets_.state_dim, ad = nets_.action_dim;
  Mat x(nets_.goal_dim, n), cond(sd + ad, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const HindsightSample hs = short_buf_.sample_geometric_goal(cfg_.gamma, cfg_.truncation, rng_);
    x.col(i) = normalize_state(hs.goal, goal_ranges_);
    cond.col(i).head(sd) = norm_state(hs.s);
    cond.col(i).tail(ad) = hs.a;
  }
  return flow_fit_step(nets_.future, x, cond, cfg_.spatial_sigma, cfg_.flow_l2, future_opt_, rng_).nll;
}

double VdiAgent::fit_state_density() {
  short_buf_.require_role(BufferRole::kShort, "state density");
  const auto n = static_cast<Eigen::Index>(cfg_.batch);
  Mat x(nets_.goal_dim, n);
  const Mat none(0, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const HindsightSample hs = short_buf_.sample_geometric_goal(cfg_.gamma, 0, rng_);
    x.col(i) = normalize_state(hs.goal, goal_ranges_);
  }
  return flow_fit_step(nets_.state_density, x, none, cfg_.spatial_sigma, cfg_.flow_l2, state_opt_, rng_).nll;
}

VdiAgent::Metrics VdiAgent::iterate() {
  Metrics m;
  m.iteration = ++iteration_;
  Episode ep = collect(iteration_ <= cfg_.warmup_episodes);
  long_buf_.push(ep);
  short_buf_.push(std::move(ep));
  m.env_steps = env_steps_;
  if (iteration_ <= cfg_.warmup_episodes || long_buf_.transitions() < static_cast<std::size_t>(cfg_.batch))
    return m;
  m.learned = true;

  double fnll = 0.0, snll = 0.0;
  int fc = 0, sc = 0;
  for (int i = 0; i < cfg_.density_updates_per_iteration; ++i) {
    const double a = fit_future();
    if (std::isfinite(a)) fnll += a, ++fc;
    if (cfg_.inverse_density) {
      const double b = fit_state_density();
      if (std::isfinite(b)) snll += b, ++sc;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.future_nll = fc ? fnll / fc : nan;
  m.state_nll = sc ? snll / sc : nan;

  long_buf_.require_role(BufferRole::kLong, "critic");
  const auto n = static_cast<Eigen::Index>(cfg_.batch);
  const Eigen::Index nd = demo_goals_.cols();
  const Vec demo_w = demo_weight_vector();
  m.max_weight = demo_w.maxCoeff();
  double closs = 0.0, aobj = 0.0;
  for (int u = 0; u < cfg_.updates_per_iteration; ++u) {
    const std::vector<Transition> trs = long_buf_.sample_transitions(static_cast<std::size_t>(n), rng_);
    VdiBatch b;
    b.s.resize(nets_.state_dim, n);
    b.a.resize(nets_.action_dim, n);
    b.s2.resize(nets_.state_dim, n);
    b.goal.resize(nets_.goal_dim, n);
    Mat actor_goal(nets_.goal_dim, n);
    Vec w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Transition& tr = trs[static_cast<std::size_t>(i)];
      b.s.col(i) = norm_state(tr.s);
      b.a.col(i) = tr.a;
      b.s2.col(i) = norm_state(tr.s2);
      b.goal.col(i) = demo_goals_.col(static_cast<Eigen::Index>(rng_.index(static_cast<std::size_t>(nd))));
      const auto k = static_cast<Eigen::Index>(rng_.index(static_cast<std::size_t>(nd)));
      actor_goal.col(i) = demo_goals_.col(k);
      w[i] = demo_w[k];
    }
    TargetStats ts;
    const Vec y = vdi_target(nets_, cfg_, b, goal_log_jac_, &ts);
    m.density_fallbacks += ts.density_fallbacks;
    closs += vdi_critic_update(nets_, b, y, critic1_opt_, critic2_opt_);
    aobj += vdi_actor_update(nets_, b.s, actor_goal, w, actor_opt_, cfg_.action_l2);
    ++updates_;
    vdi_target_sync(nets_, cfg_.target_sync, updates_);
  }
  if (cfg_.updates_per_iteration > 0) {
    m.critic_loss = closs / cfg_.updates_per_iteration;
    m.actor_objective = aobj / cfg_.updates_per_iteration;
  }
  return m;
}

std::vector<Vec> VdiAgent::rollout(Rng& rng) const {
  PointMassEnv env(env_.config());
  Vec s = env.reset(rng);
  std::vector<Vec> out{s};
  for (int t = 0; t < env.horizon(); ++t) {
    const StepResult r = env.step(policy(s), rng);
    s = r.next_state;
    out.push_back(s);
    if (r.done) break;
  }
  return out;
}

ImitationScore VdiAgent::evaluate(int n_episodes, Rng& rng) const {
  VDL_REQUIRE(n_episodes > 0, ErrorCode::kInvalidArgument, "evaluate: need at least one episode");
  const std::vector<Vec> demos = demo_positions();
  ImitationScore sc;
  for (int k = 0; k < n_episodes; ++k) {
    const std::vector<Vec> pos = rollout(rng);
    sc.nearest_demo_distance += mean_nearest_distance(pos, demos) / n_episodes;
    sc.waypoint_completion += waypoint_completion(pos, env_.config()) / n_episodes;
    sc.coverage += demo_coverage(pos, demos, env_.config().waypoint_tolerance) / n_episodes;
  }
  return sc;
}

}  // namespace vdl
