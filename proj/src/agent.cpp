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

#include <algorithm>
#include <cmath>
#include <limits>

namespace vdl {

const char* algo_name(Algo a) {
  switch (a) {
    case Algo::kTd3: return "td3";
    case Algo::kHer: return "her";
    case Algo::kUvd: return "uvd";
  }
  return "?";
}

Algo algo_from_name(const std::string& name) {
  if (name == "td3") return Algo::kTd3;
  if (name == "her") return Algo::kHer;
  if (name == "uvd") return Algo::kUvd;
  throw Error(ErrorCode::kConfig, "unknown goal-reaching algorithm '" + name + "'");
}

void UvdConfig::validate() const {
  auto req = [](bool ok, const char* msg) { VDL_REQUIRE(ok, ErrorCode::kConfig, msg); };
  req(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
  req(truncation >= 0, "truncation must be non-negative");
  req(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0, 1]");
  req(spatial_sigma >= 0.0 && explore_sigma >= 0.0, "noise scales must be non-negative");
  req(random_eps >= 0.0 && random_eps <= 1.0, "random_eps must be in [0, 1]");
  req(target_sync > 0, "target_sync must be positive");
  req(batch > 0 && her_k >= 0, "batch must be positive and her_k non-negative");
  req(flow_layers >= 1, "flow needs at least one layer");
  req(actor_lr > 0.0 && critic_lr > 0.0 && flow_lr > 0.0, "learning rates must be positive");
  req(flow_l2 >= 0.0, "flow_l2 must be non-negative");
  req(long_capacity > 0 && short_capacity > 0, "buffer capacities must be positive");
  req(updates_per_iteration >= 0 && density_updates_per_iteration >= 0 && warmup_episodes >= 0,
      "update counts must be non-negative");
}

double UvdConfig::gamma_eff(int goal_dim) const {
  return logit_averaging ? std::pow(gamma, 1.0 / goal_dim) : gamma;
}

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

AgentNets AgentNets::make(int state_dim, int action_dim, int goal_dim, const UvdConfig& cfg,
                          bool with_density, Rng& rng) {
  AgentNets n;
  n.state_dim = state_dim;
  n.action_dim = action_dim;
  n.goal_dim = goal_dim;
  n.actor = Mlp::make(layer_sizes(state_dim + goal_dim, cfg.actor_hidden, action_dim), Activation::kTanh, rng);
  const auto critic_sizes = layer_sizes(state_dim + action_dim + goal_dim, cfg.critic_hidden, 1);
  n.critic1 = Mlp::make(critic_sizes, Activation::kLinear, rng);
  n.critic2 = Mlp::make(critic_sizes, Activation::kLinear, rng);
  n.actor_target = n.actor;
  n.critic1_target = n.critic1;
  n.critic2_target = n.critic2;
  n.has_density = with_density;
  if (with_density) {
    FlowSpec spec;
    spec.dim = goal_dim;
    spec.cond_dim = n.density_cond_dim();
    spec.num_layers = cfg.flow_layers;
    spec.hidden = cfg.flow_hidden;
    spec.logit_averaging = cfg.logit_averaging;
    n.density = Flow::make(spec, rng);
    n.density_target = n.density;
  }
  return n;
}

Mat policy_actions(const Mlp& actor, const Mat& s, const Mat& g) { return actor.forward(vstack({&s, &g})); }

Vec critic_values(const Mlp& critic, const Mat& s, const Mat& a, const Mat& g) {
  return critic.forward(vstack({&s, &a, &g})).row(0).transpose();
}

Vec act(const AgentNets& nets, const Vec& s, const Vec& g, double sigma, Rng& rng) {
  Vec a = nets.actor.forward(concat({&s, &g}));
  if (sigma > 0.0)
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += sigma * rng.normal();
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

namespace {

Vec min_target_q(const AgentNets& nets, const CriticBatch& b, Mat* a2_out) {
  Mat a2 = policy_actions(nets.actor_target, b.s2, b.g);
  const Vec q1 = critic_values(nets.critic1_target, b.s2, a2, b.g);
  const Vec q2 = critic_values(nets.critic2_target, b.s2, a2, b.g);
  if (a2_out) *a2_out = std::move(a2);
  return q1.cwiseMin(q2);
}

void check_batch(const CriticBatch& b) {
  const Eigen::Index n = b.s.cols();
  VDL_CONTRACT(n > 0, "critic batch is empty");
  VDL_CONTRACT(b.a.cols() == n && b.s2.cols() == n && b.g.cols() == n && b.reward.size() == n &&
                   static_cast<Eigen::Index>(b.terminal.size()) == n && b.terminal_value.size() == n,
               "critic batch columns disagree");
}

}  // namespace

Vec td_target(const AgentNets& nets, const UvdConfig& cfg, const CriticBatch& b) {
  check_batch(b);
  const double ge = cfg.gamma_eff(nets.goal_dim);
  const Vec qt = min_target_q(nets, b, nullptr);
  Vec y(qt.size());
  for (Eigen::Index i = 0; i < qt.size(); ++i)
    y[i] = b.reward[i] + ge * (b.terminal[static_cast<std::size_t>(i)] ? b.terminal_value[i] : qt[i]);
  return y;
}

Vec density_values(const Flow& flow, const Mat& x, const Mat& cond, double goal_log_jacobian,
                   bool averaging, double cap) {
  Vec lv(x.cols());
  try {
    lv = flow.log_prob(x, cond);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNumeric) throw;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      try {
        lv[i] = flow.log_prob(x.col(i), cond.col(i))[0];
      } catch (const Error& ei) {
        if (ei.code() != ErrorCode::kNumeric) throw;
        lv[i] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  lv.array() += goal_log_jacobian;
  if (averaging) lv /= static_cast<double>(flow.dim());
  Vec f(lv.size());
  for (Eigen::Index i = 0; i < lv.size(); ++i)
    f[i] = std::isfinite(lv[i]) ? std::min(std::exp(lv[i]), cap) : std::numeric_limits<double>::quiet_NaN();
  return f;
}

Vec uvd_target(const AgentNets& nets, const UvdConfig& cfg, const CriticBatch& b, double goal_log_jacobian,
               TargetStats* stats) {
  check_batch(b);
  VDL_CONTRACT(nets.has_density, "uvd_target: agent has no density estimator");
  const double ge = cfg.gamma_eff(nets.goal_dim);
  Mat a2;
  const Vec qt = min_target_q(nets, b, &a2);
  const Mat cond = vstack({&b.s2, &a2, &b.g});
  const Vec f = density_values(nets.density_target, b.g, cond, goal_log_jacobian, cfg.logit_averaging,
                               cfg.density_cap());
  Vec y(qt.size());
  int fallbacks = 0, counted = 0;
  double fsum = 0.0;
  for (Eigen::Index i = 0; i < qt.size(); ++i) {
    if (b.terminal[static_cast<std::size_t>(i)]) {
      double v = b.terminal_value[i];
      if (b.terminal_density) {
        if (std::isfinite(f[i])) {
          v = f[i];
          fsum += f[i];
          ++counted;
        } else {
          ++fallbacks;
        }
      }
      y[i] = b.reward[i] + ge * v;
      continue;
    }
    double boot = qt[i];
    if (std::isfinite(f[i])) {
      boot = cfg.lambda * qt[i] + (1.0 - cfg.lambda) * std::max(qt[i], f[i]);
      fsum += f[i];
      ++counted;
    } else {
      ++fallbacks;
    }
    y[i] = b.reward[i] + ge * boot;
  }
  if (stats) {
    stats->density_fallbacks += fallbacks;
    stats->mean_density = counted > 0 ? fsum / counted : 0.0;
  }
  return y;
}

double critic_loss_and_grad(const Mlp& critic, const CriticBatch& b, const Vec& targets, Mlp& grads) {
  check_batch(b);
  VDL_CONTRACT(targets.size() == b.s.cols(), "critic update: target count");
  const double n = static_cast<double>(b.s.cols());
  Mlp::Tape tape;
  const Mat& q = critic.forward(vstack({&b.s, &b.a, &b.g}), tape);
  const Eigen::RowVectorXd err = q.row(0) - targets.transpose();
  critic.backward(tape, Mat(2.0 * err / n), &grads);
  return err.squaredNorm() / n;
}

double critic_update(AgentNets& nets, const CriticBatch& b, const Vec& targets, AdamState& opt1,
                     AdamState& opt2) {
  double total = 0.0;
  for (auto [critic, opt] : {std::pair{&nets.critic1, &opt1}, std::pair{&nets.critic2, &opt2}}) {
    Mlp grads = critic->zeros_like();
    total += critic_loss_and_grad(*critic, b, targets, grads);
    adam_step(*critic, grads, *opt);
  }
  return 0.5 * total;
}

double actor_loss_and_grad(const AgentNets& nets, const Mat& s, const Mat& g, const Vec& weights, Mlp& grads) {
  const Eigen::Index n = s.cols();
  VDL_CONTRACT(n > 0 && g.cols() == n, "actor batch is empty or misaligned");
  VDL_CONTRACT(weights.size() == 0 || weights.size() == n, "actor weights count");
  const Vec w = weights.size() ? weights : Vec(Vec::Ones(n));
  Mlp::Tape actor_tape, critic_tape;
  const Mat a = nets.actor.forward(vstack({&s, &g}), actor_tape);
  const Mat& q = nets.critic1.forward(vstack({&s, &a, &g}), critic_tape);
  const double loss = -(q.row(0).transpose().cwiseProduct(w)).sum() / static_cast<double>(n);
  const Mat upstream = -w.transpose() / static_cast<double>(n);
  const Mat d_in = nets.critic1.backward(critic_tape, upstream, nullptr);
  nets.actor.backward(actor_tape, d_in.middleRows(nets.state_dim, nets.action_dim), &grads);
  return loss;
}

double actor_update(AgentNets& nets, const Mat& s, const Mat& g, AdamState& opt, const Vec& weights) {
  Mlp grads = nets.actor.zeros_like();
  const double loss = actor_loss_and_grad(nets, s, g, weights, grads);
  adam_step(nets.actor, grads, opt);
  return -loss;
}

bool target_sync(AgentNets& nets, int period, long step) {
  VDL_CONTRACT(period > 0, "target_sync: period must be positive");
  if (step <= 0 || step % period != 0) return false;
  nets.actor_target = nets.actor;
  nets.critic1_target = nets.critic1;
  nets.critic2_target = nets.critic2;
  if (nets.has_density) nets.density_target = nets.density;
  return true;
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

}  // namespace

GoalAgent::GoalAgent(std::unique_ptr<GoalEnv> env, Algo algo, const UvdConfig& cfg, std::uint64_t seed)
    : env_(std::move(env)),
      algo_(algo),
      cfg_(cfg),
      rng_(seed),
      long_buf_(cfg.long_capacity, BufferRole::kLong),
      short_buf_(cfg.short_capacity, BufferRole::kShort) {
  VDL_CONTRACT(env_ != nullptr, "GoalAgent: no environment");
  cfg_.validate();
  Rng init = rng_.fork(1);
  nets_ = AgentNets::make(env_->state_dim(), env_->action_dim(), env_->goal_dim(), cfg_, algo == Algo::kUvd, init);
  actor_opt_ = AdamState::for_params(nets_.actor.params(), cfg_.actor_lr);
  critic1_opt_ = AdamState::for_params(nets_.critic1.params(), cfg_.critic_lr);
  critic2_opt_ = AdamState::for_params(nets_.critic2.params(), cfg_.critic_lr);
  if (nets_.has_density) flow_opt_ = AdamState::for_params(nets_.density.params(), cfg_.flow_lr);
  state_ranges_ = ranges_from_bounds(env_->state_bounds());
  goal_ranges_ = ranges_from_bounds(env_->goal_bounds());
  goal_log_jac_ = log_jacobian(goal_ranges_);
  const GoalEnv* e = env_.get();
  reward_ = GoalReward{cfg_.gamma, [e](const Vec& a, const Vec& g) { return e->reached(a, g); }};
}

Vec GoalAgent::policy(const Vec& state, const Vec& goal) const {
  const Vec s = norm_state(state), g = norm_goal(goal);
  return nets_.actor.forward(concat({&s, &g}));
}

double GoalAgent::q_value(const Vec& state, const Vec& action, const Vec& goal) const {
  const Vec s = norm_state(state), g = norm_goal(goal);
  return nets_.critic1.forward(concat({&s, &action, &g}))[0];
}

Episode GoalAgent::collect(bool random_actions, double* ret, bool* success) {
  Episode ep;
  Vec s = env_->reset(rng_);
  ep.goal = env_->sample_goal(rng_);
  const Vec gn = norm_goal(ep.goal);
  ep.states.push_back(s);
  double total = 0.0;
  bool visited = false;
  for (int t = 0; t < env_->horizon(); ++t) {
    Vec a;
    if (random_actions || rng_.uniform() < cfg_.random_eps) {
      a = Vec(env_->action_dim());
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng_.uniform(-1.0, 1.0);
    } else {
      a = act(nets_, norm_state(s), gn, cfg_.explore_sigma, rng_);
    }
    const StepResult r = env_->step(a, rng_);
    total += reward_(r.achieved_goal, ep.goal);
    visited = visited || env_->reached(r.achieved_goal, ep.goal);
    ep.actions.push_back(a);
    ep.achieved.push_back(r.achieved_goal);
    s = r.next_state;
    ep.states.push_back(s);
    ++env_steps_;
    if (r.done) {
      ep.terminal = true;
      break;
    }
  }
  ep.achieved.push_back(env_->achieved_goal(s));
  if (ret) *ret = total;
  const bool at_end = env_->reached(ep.achieved.back(), ep.goal);
  if (success) *success = at_end || (env_->success_on_visit() && visited);
  return ep;
}

CriticBatch GoalAgent::make_batch(const std::vector<Transition>& trs) const {
  const auto n = static_cast<Eigen::Index>(trs.size());
  CriticBatch b;
  b.s.resize(nets_.state_dim, n);
  b.a.resize(nets_.action_dim, n);
  b.s2.resize(nets_.state_dim, n);
  b.g.resize(nets_.goal_dim, n);
  b.reward.resize(n);
  b.terminal.resize(trs.size());
  b.terminal_value.resize(n);
  const bool reward_free = algo_ == Algo::kUvd && !env_->discrete();
  b.terminal_density = reward_free;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& tr = trs[static_cast<std::size_t>(i)];
    b.s.col(i) = norm_state(tr.s);
    b.a.col(i) = tr.a;
    b.s2.col(i) = norm_state(tr.s2);
    b.g.col(i) = norm_goal(tr.goal);
    b.reward[i] = reward_free ? 0.0 : tr.reward;
    b.terminal[static_cast<std::size_t>(i)] = tr.terminal;
    b.terminal_value[i] = tr.terminal && env_->reached(env_->achieved_goal(tr.s2), tr.goal) ? 1.0 : 0.0;
  }
  return b;
}

double GoalAgent::fit_density() {
  short_buf_.require_role(BufferRole::kShort, "density estimator");
  const auto n = static_cast<Eigen::Index>(cfg_.batch);
  const int sd = nets_.state_dim, ad = nets_.action_dim, gd = nets_.goal_dim;
  Mat x(gd, n), cond(nets_.density_cond_dim(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const HindsightSample hs = short_buf_.sample_geometric_goal(cfg_.gamma, cfg_.truncation, rng_);
    Vec g = hs.goal;
    // Discrete goals are dequantized over their unit cell.
    if (env_->discrete())
      for (Eigen::Index k = 0; k < g.size(); ++k) g[k] += rng_.uniform(-0.5, 0.5);
    x.col(i) = norm_goal(g);
    cond.col(i).head(sd) = norm_state(hs.s);
    cond.col(i).segment(sd, ad) = hs.a;
    cond.col(i).tail(gd) = norm_goal(hs.intended);
  }
  return flow_fit_step(nets_.density, x, cond, cfg_.spatial_sigma, cfg_.flow_l2, flow_opt_, rng_).nll;
}

GoalAgent::Metrics GoalAgent::learn(Metrics m) {
  if (long_buf_.transitions() < static_cast<std::size_t>(cfg_.batch) || iteration_ <= cfg_.warmup_episodes)
    return m;
  m.learned = true;
  if (algo_ == Algo::kUvd && cfg_.density_updates_per_iteration > 0) {
    double nll = 0.0;
    int counted = 0;
    for (int i = 0; i < cfg_.density_updates_per_iteration; ++i) {
      const double v = fit_density();
      if (std::isfinite(v)) {
        nll += v;
        ++counted;
      }
    }
    m.density_nll = counted ? nll / counted : std::numeric_limits<double>::quiet_NaN();
  }
  long_buf_.require_role(BufferRole::kLong, "critic");
  double closs = 0.0, aobj = 0.0;
  for (int i = 0; i < cfg_.updates_per_iteration; ++i) {
    std::vector<Transition> trs;
    if (algo_ == Algo::kHer) {
      trs = sample_her_batch(long_buf_, static_cast<std::size_t>(cfg_.batch), cfg_.her_k, RelabelStrategy::kFuture,
                             reward_, rng_);
    } else {
      trs = long_buf_.sample_transitions(static_cast<std::size_t>(cfg_.batch), rng_);
      for (Transition& tr : trs) tr.reward = reward_(tr.achieved, tr.goal);
    }
    const CriticBatch b = make_batch(trs);
    TargetStats ts;
    const Vec y = algo_ == Algo::kUvd ? uvd_target(nets_, cfg_, b, goal_log_jac_, &ts) : td_target(nets_, cfg_, b);
    m.density_fallbacks += ts.density_fallbacks;
    m.mean_density += ts.mean_density / cfg_.updates_per_iteration;
    closs += critic_update(nets_, b, y, critic1_opt_, critic2_opt_);
    aobj += actor_update(nets_, b.s, b.g, actor_opt_);
    ++updates_;
    target_sync(nets_, cfg_.target_sync, updates_);
  }
  if (cfg_.updates_per_iteration > 0) {
    m.critic_loss = closs / cfg_.updates_per_iteration;
    m.actor_objective = aobj / cfg_.updates_per_iteration;
  }
  return m;
}

GoalAgent::Metrics GoalAgent::iterate() {
  switch (algo_) {
    case Algo::kUvd: return uvd_iteration();
    case Algo::kHer: return her_iteration();
    case Algo::kTd3: return td3_iteration();
  }
  throw Error(ErrorCode::kInternal, "unknown algorithm");
}

namespace {

GoalAgent::Metrics start_metrics(long iteration) {
  GoalAgent::Metrics m;
  m.iteration = iteration;
  return m;
}

}  // namespace

GoalAgent::Metrics GoalAgent::uvd_iteration() {
  VDL_CONTRACT(algo_ == Algo::kUvd, "uvd_iteration on a non-UVD agent");
  Metrics m = start_metrics(++iteration_);
  Episode ep = collect(iteration_ <= cfg_.warmup_episodes, &m.episode_return, &m.episode_success);
  long_buf_.push(ep);
  short_buf_.push(std::move(ep));
  m = learn(m);
  m.env_steps = env_steps_;
  return m;
}

GoalAgent::Metrics GoalAgent::her_iteration() {
  VDL_CONTRACT(algo_ == Algo::kHer, "her_iteration on a non-HER agent");
  Metrics m = start_metrics(++iteration_);
  long_buf_.push(collect(iteration_ <= cfg_.warmup_episodes, &m.episode_return, &m.episode_success));
  m = learn(m);
  m.env_steps = env_steps_;
  return m;
}

GoalAgent::Metrics GoalAgent::td3_iteration() {
  VDL_CONTRACT(algo_ == Algo::kTd3, "td3_iteration on a non-TD3 agent");
  Metrics m = start_metrics(++iteration_);
  long_buf_.push(collect(iteration_ <= cfg_.warmup_episodes, &m.episode_return, &m.episode_success));
  m = learn(m);
  m.env_steps = env_steps_;
  return m;
}

double GoalAgent::evaluate(int n_episodes, Rng& rng) const {
  VDL_REQUIRE(n_episodes > 0, ErrorCode::kInvalidArgument, "evaluate: need at least one episode");
  const std::unique_ptr<GoalEnv> env = env_->clone();
  int hits = 0;
  for (int k = 0; k < n_episodes; ++k) {
    Vec s = env->reset(rng);
    const Vec g = env->sample_goal(rng);
    const Vec gn = norm_goal(g);
    bool hit = false;
    for (int t = 0; t < env->horizon() && !hit; ++t) {
      const Vec sn = norm_state(s);
      const StepResult r = env->step(nets_.actor.forward(concat({&sn, &gn})), rng);
      s = r.next_state;
      hit = env->success_on_visit() && env->reached(env->achieved_goal(s), g);
      if (r.done) break;
    }
    if (hit || env->reached(env->achieved_goal(s), g)) ++hits;
  }
  return static_cast<double>(hits) / n_episodes;
}

}  // namespace vdl
