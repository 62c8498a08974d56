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

#include "vdlab/envs.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace vdl {

void DiscreteMdpSpec::validate() const {
  VDL_CONTRACT(n_states > 0 && n_actions > 0 && n_goals > 0, "mdp: empty state, action or goal set");
  VDL_CONTRACT(static_cast<int>(P.size()) == n_actions, "mdp: transition tensor has wrong action count");
  VDL_CONTRACT(start.size() == n_states, "mdp: start distribution has wrong size");
  VDL_CONTRACT(static_cast<int>(goal.size()) == n_states * n_actions, "mdp: goal map is not total");
  VDL_CONTRACT(static_cast<int>(absorbing.size()) == n_states, "mdp: absorbing set has wrong size");
  for (int a = 0; a < n_actions; ++a) {
    const Mat& Pa = P[static_cast<std::size_t>(a)];
    VDL_CONTRACT(Pa.rows() == n_states && Pa.cols() == n_states, "mdp: transition matrix shape");
    VDL_CONTRACT((Pa.array() >= 0.0).all(), "mdp: negative transition probability");
    for (int s = 0; s < n_states; ++s)
      VDL_CONTRACT(std::abs(Pa.row(s).sum() - 1.0) <= 1e-12,
                   "mdp: row (" + std::to_string(s) + ", " + std::to_string(a) + ") does not sum to 1");
  }
  VDL_CONTRACT((start.array() >= 0.0).all() && std::abs(start.sum() - 1.0) <= 1e-12,
               "mdp: start distribution does not sum to 1");
  for (int g : goal) VDL_CONTRACT(g >= 0 && g < n_goals, "mdp: goal id out of range");
}

namespace {

int sample_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, Rng& rng) {
  double u = rng.uniform();
  const auto n = static_cast<int>(row.size());
  int last = -1;
  for (int i = 0; i < n; ++i) {
    if (row[i] <= 0.0) continue;
    last = i;
    u -= row[i];
    if (u < 0.0) return i;
  }
  return last;
}

}  // namespace

int DiscreteMdpSpec::sample_start(Rng& rng) const { return sample_row(start.transpose(), rng); }

int DiscreteMdpSpec::sample_next(int s, int a, Rng& rng) const {
  return sample_row(P[static_cast<std::size_t>(a)].row(s), rng);
}

// ---------------------------------------------------------------------------

CliffWalk cliffwalk_build(const CliffWalkConfig& in) {
  CliffWalk cw;
  cw.cfg = in;
  CliffWalkConfig& cfg = cw.cfg;
  VDL_REQUIRE(cfg.width >= 2 && cfg.height >= 1, ErrorCode::kConfig, "cliffwalk: grid too small");
  VDL_REQUIRE(cfg.slip >= 0.0 && cfg.slip < 0.5, ErrorCode::kConfig, "cliffwalk: slip must be in [0, 0.5)");
  if (cfg.goal[0] < 0) cfg.goal = {cfg.width - 1, 0};
  if (cfg.cliff.empty())
    for (int x = 1; x + 1 < cfg.width; ++x) cfg.cliff.push_back({x, 0});
  auto inside = [&](const std::array<int, 2>& c) {
    return c[0] >= 0 && c[0] < cfg.width && c[1] >= 0 && c[1] < cfg.height;
  };
  VDL_REQUIRE(inside(cfg.start) && inside(cfg.goal), ErrorCode::kConfig, "cliffwalk: start or goal off the grid");
  VDL_REQUIRE(cfg.start != cfg.goal, ErrorCode::kConfig, "cliffwalk: start equals goal");

  const int n_cells = cfg.width * cfg.height;
  cw.is_cliff.assign(static_cast<std::size_t>(n_cells), false);
  for (const auto& c : cfg.cliff) {
    VDL_REQUIRE(inside(c), ErrorCode::kConfig, "cliffwalk: cliff cell off the grid");
    VDL_REQUIRE(c != cfg.start && c != cfg.goal, ErrorCode::kConfig, "cliffwalk: start or goal on the cliff");
    cw.is_cliff[static_cast<std::size_t>(cw.cell(c[0], c[1]))] = true;
  }
  cw.start_state = cw.cell(cfg.start[0], cfg.start[1]);
  cw.goal_state = cw.cell(cfg.goal[0], cfg.goal[1]);
  cw.fail_state = n_cells;

  DiscreteMdpSpec& m = cw.mdp;
  m.n_states = n_cells + 1;
  m.n_actions = 4;
  m.n_goals = m.n_states;
  m.P.assign(4, Mat::Zero(m.n_states, m.n_states));
  m.start = Vec::Zero(m.n_states);
  m.start[cw.start_state] = 1.0;
  m.absorbing.assign(static_cast<std::size_t>(m.n_states), false);
  m.absorbing[static_cast<std::size_t>(cw.goal_state)] = true;
  m.absorbing[static_cast<std::size_t>(cw.fail_state)] = true;
  m.goal.resize(static_cast<std::size_t>(m.n_states * m.n_actions));
  m.coords.resize(static_cast<std::size_t>(m.n_states));

  static constexpr int dx[4] = {0, 1, 0, -1};
  static constexpr int dy[4] = {1, 0, -1, 0};
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < 4; ++a) m.goal[static_cast<std::size_t>(s * 4 + a)] = s;
    if (s == cw.fail_state) {
      m.coords[static_cast<std::size_t>(s)] = {-1, -1};
      for (int a = 0; a < 4; ++a) m.P[static_cast<std::size_t>(a)](s, s) = 1.0;
      continue;
    }
    const int x = s % cfg.width, y = s / cfg.width;
    m.coords[static_cast<std::size_t>(s)] = {x, y};
    if (s == cw.goal_state) {
      for (int a = 0; a < 4; ++a) m.P[static_cast<std::size_t>(a)](s, s) = 1.0;
      continue;
    }
    if (cw.is_cliff[static_cast<std::size_t>(s)]) {
      for (int a = 0; a < 4; ++a) m.P[static_cast<std::size_t>(a)](s, cw.fail_state) = 1.0;
      continue;
    }
    for (int a = 0; a < 4; ++a) {
      const double probs[3] = {1.0 - cfg.slip, 0.5 * cfg.slip, 0.5 * cfg.slip};
      const int moves[3] = {a, (a + 1) % 4, (a + 3) % 4};
      for (int k = 0; k < 3; ++k) {
        if (probs[k] == 0.0) continue;
        const int nx = std::clamp(x + dx[moves[k]], 0, cfg.width - 1);
        const int ny = std::clamp(y + dy[moves[k]], 0, cfg.height - 1);
        int next = cw.cell(nx, ny);
        if (cw.is_cliff[static_cast<std::size_t>(next)]) next = cw.fail_state;
        m.P[static_cast<std::size_t>(a)](s, next) += probs[k];
      }
    }
  }
  m.validate();
  return cw;
}

std::vector<int> cliff_adjacent_states(const CliffWalk& cw) {
  std::vector<int> out;
  const int w = cw.cfg.width, h = cw.cfg.height;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int s = cw.cell(x, y);
      if (cw.is_cliff[static_cast<std::size_t>(s)] || s == cw.goal_state) continue;
      const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
      for (const auto& n : nb)
        if (n[0] >= 0 && n[0] < w && n[1] >= 0 && n[1] < h &&
            cw.is_cliff[static_cast<std::size_t>(cw.cell(n[0], n[1]))]) {
          out.push_back(s);
          break;
        }
    }
  return out;
}

// ---------------------------------------------------------------------------

CliffWalkEnv::CliffWalkEnv(const CliffWalkConfig& cfg, int horizon)
    : cw_(cliffwalk_build(cfg)), horizon_(horizon) {
  VDL_REQUIRE(horizon > 0, ErrorCode::kConfig, "cliffwalk: horizon must be positive");
}

Vec CliffWalkEnv::coords_of(int s) const {
  const auto& c = cw_.mdp.coords[static_cast<std::size_t>(s)];
  return Vec{{static_cast<double>(c[0]), static_cast<double>(c[1])}};
}

int CliffWalkEnv::state_of(const Vec& coords) const {
  const int x = static_cast<int>(std::lround(coords[0]));
  const int y = static_cast<int>(std::lround(coords[1]));
  if (x < 0 || y < 0) return cw_.fail_state;
  return cw_.cell(x, y);
}

int CliffWalkEnv::move_of(const Vec& a) {
  if (std::abs(a[0]) >= std::abs(a[1])) return a[0] >= 0 ? kRight : kLeft;
  return a[1] >= 0 ? kUp : kDown;
}

Vec CliffWalkEnv::reset(Rng& rng) {
  state_ = cw_.mdp.sample_start(rng);
  return coords_of(state_);
}

Vec CliffWalkEnv::sample_goal(Rng& rng) const {
  // Uniform over non-cliff grid cells other than the start.
  std::vector<int> cells;
  for (int s = 0; s < cw_.cfg.width * cw_.cfg.height; ++s)
    if (!cw_.is_cliff[static_cast<std::size_t>(s)] && s != cw_.start_state) cells.push_back(s);
  return coords_of(cells[rng.index(cells.size())]);
}

StepResult CliffWalkEnv::step(const Vec& action, Rng& rng) {
  VDL_CONTRACT(action.size() == 2, "cliffwalk: action must be 2D");
  StepResult r;
  r.achieved_goal = coords_of(state_);
  state_ = cw_.mdp.sample_next(state_, move_of(action), rng);
  r.next_state = coords_of(state_);
  r.done = cw_.mdp.absorbing[static_cast<std::size_t>(state_)];
  return r;
}

bool CliffWalkEnv::reached(const Vec& achieved, const Vec& goal) const {
  return std::lround(achieved[0]) == std::lround(goal[0]) &&
         std::lround(achieved[1]) == std::lround(goal[1]);
}

Mat CliffWalkEnv::state_bounds() const {
  Mat b(2, 2);
  b << -1.0, cw_.cfg.width - 1.0, -1.0, cw_.cfg.height - 1.0;
  return b;
}

std::unique_ptr<GoalEnv> CliffWalkEnv::clone() const { return std::make_unique<CliffWalkEnv>(*this); }

// ---------------------------------------------------------------------------

double slide_noise_sd(const Vec& action, double noise_scale) {
  const double excess = (action.array() - 0.5).max(0.0).matrix().squaredNorm();
  return noise_scale * excess / (2.0 * std::numbers::e);
}

StepResult slide_step(const Vec& state, const Vec& action, const SlideConfig& cfg, Rng& rng) {
  VDL_CONTRACT(state.size() == 5 && action.size() == 2, "slide_step: dimension mismatch");
  StepResult r;
  r.achieved_goal = state.head(2);
  Vec v = cfg.friction * state.segment(2, 2);
  const int t = static_cast<int>(std::lround(state[4] * cfg.horizon));
  if (t < cfg.actuation_horizon) {
    const Vec a = action.cwiseMax(-1.0).cwiseMin(1.0);
    const double sd = slide_noise_sd(a, cfg.noise_scale);
    Vec executed = a;
    if (sd > 0.0)
      for (int i = 0; i < 2; ++i) executed[i] += sd * rng.normal();
    v += cfg.impulse * executed;
  }
  Vec p = state.head(2) + v;
  // The table rim stops the puck.
  for (int i = 0; i < 2; ++i) {
    if (p[i] < 0.0 || p[i] > cfg.arena) {
      p[i] = std::clamp(p[i], 0.0, cfg.arena);
      v[i] = 0.0;
    }
  }
  r.next_state = Vec(5);
  r.next_state << p, v, std::min(1.0, (t + 1.0) / cfg.horizon);
  // The episode is scored at the horizon, where the state becomes absorbing.
  r.done = t + 1 >= cfg.horizon;
  return r;
}

SlideEnv::SlideEnv(const SlideConfig& cfg) : cfg_(cfg), state_(Vec::Zero(5)) {
  VDL_REQUIRE(cfg.epsilon > 0.0, ErrorCode::kConfig, "slide: epsilon must be positive");
  VDL_REQUIRE(cfg.friction >= 0.0 && cfg.friction < 1.0, ErrorCode::kConfig, "slide: friction must be in [0, 1)");
  VDL_REQUIRE(cfg.horizon > 0 && cfg.actuation_horizon > 0 && cfg.actuation_horizon <= cfg.horizon,
              ErrorCode::kConfig, "slide: bad horizons");
  VDL_REQUIRE(cfg.goal_lo > 0.5 && cfg.goal_hi >= cfg.goal_lo, ErrorCode::kConfig,
              "slide: goals must lie beyond a single gentle push");
}

Vec SlideEnv::reset(Rng& rng) {
  state_ = Vec::Zero(5);
  for (int i = 0; i < 2; ++i)
    state_[i] = cfg_.start[static_cast<std::size_t>(i)] + cfg_.start_jitter * rng.uniform(-1.0, 1.0);
  return state_;
}

Vec SlideEnv::sample_goal(Rng& rng) const {
  const double reach = cfg_.impulse / (1.0 - cfg_.friction);
  Vec g(2);
  for (int i = 0; i < 2; ++i)
    g[i] = std::min(cfg_.arena, cfg_.start[static_cast<std::size_t>(i)] +
                                    reach * rng.uniform(cfg_.goal_lo, cfg_.goal_hi));
  return g;
}

StepResult SlideEnv::step(const Vec& action, Rng& rng) {
  StepResult r = slide_step(state_, action, cfg_, rng);
  state_ = r.next_state;
  return r;
}

bool SlideEnv::reached(const Vec& achieved, const Vec& goal) const {
  return (achieved.head(2) - goal.head(2)).norm() <= cfg_.epsilon;
}

Mat SlideEnv::state_bounds() const {
  const double vmax = cfg_.impulse * (1.0 + cfg_.noise_scale) * cfg_.actuation_horizon;
  Mat b(5, 2);
  b << 0.0, cfg_.arena, 0.0, cfg_.arena, -vmax, vmax, -vmax, vmax, 0.0, 1.0;
  return b;
}

Mat SlideEnv::goal_bounds() const {
  Mat b(2, 2);
  b << 0.0, cfg_.arena, 0.0, cfg_.arena;
  return b;
}

std::unique_ptr<GoalEnv> SlideEnv::clone() const { return std::make_unique<SlideEnv>(*this); }

// ---------------------------------------------------------------------------

StepResult pointmass_step(const Vec& state, const Vec& action, const PointMassConfig& cfg, Rng& rng) {
  VDL_CONTRACT(state.size() == 2 && action.size() == 2, "pointmass_step: dimension mismatch");
  StepResult r;
  r.achieved_goal = state;
  Vec a = action.cwiseMax(-1.0).cwiseMin(1.0);
  if (cfg.action_noise > 0.0)
    for (int i = 0; i < 2; ++i) a[i] += cfg.action_noise * rng.normal();
  r.next_state = (state + cfg.max_speed * a).cwiseMax(-cfg.arena).cwiseMin(cfg.arena);
  return r;
}

PointMassEnv::PointMassEnv(const PointMassConfig& cfg) : cfg_(cfg), state_(Vec::Zero(2)) {
  VDL_REQUIRE(cfg.horizon > 0 && cfg.max_speed > 0.0 && cfg.n_waypoints >= 2, ErrorCode::kConfig,
              "pointmass: bad config");
  VDL_REQUIRE(cfg.expert_speed <= cfg.max_speed, ErrorCode::kConfig,
              "pointmass: expert faster than the action bound allows");
}

std::vector<Vec> PointMassEnv::waypoints() const {
  std::vector<Vec> w;
  for (int i = 0; i < cfg_.n_waypoints; ++i) {
    const double th = 2.0 * std::numbers::pi * i / cfg_.n_waypoints;
    w.push_back(Vec{{cfg_.loop_radius * std::cos(th), cfg_.loop_radius * std::sin(th)}});
  }
  return w;
}

Vec PointMassEnv::reset(Rng& rng) {
  state_ = waypoints()[0];
  for (int i = 0; i < 2; ++i) state_[i] += cfg_.start_jitter * rng.uniform(-1.0, 1.0);
  return state_;
}

Vec PointMassEnv::sample_goal(Rng& rng) const {
  return Vec{{rng.uniform(-cfg_.arena, cfg_.arena), rng.uniform(-cfg_.arena, cfg_.arena)}};
}

StepResult PointMassEnv::step(const Vec& action, Rng& rng) {
  StepResult r = pointmass_step(state_, action, cfg_, rng);
  state_ = r.next_state;
  return r;
}

bool PointMassEnv::reached(const Vec& achieved, const Vec& goal) const {
  return (achieved - goal).norm() <= cfg_.waypoint_tolerance;
}

Mat PointMassEnv::state_bounds() const {
  Mat b(2, 2);
  b << -cfg_.arena, cfg_.arena, -cfg_.arena, cfg_.arena;
  return b;
}

std::unique_ptr<GoalEnv> PointMassEnv::clone() const { return std::make_unique<PointMassEnv>(*this); }

namespace {

double segment_distance(const Vec& p, const Vec& a, const Vec& b) {
  const Vec ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

}  // namespace

ExpertTrace expert_rollout(const PointMassConfig& cfg, Rng& rng) {
  PointMassEnv env(cfg);
  const std::vector<Vec> wps = env.waypoints();
  const auto n = wps.size();
  ExpertTrace tr;
  Vec s = wps[0];
  std::size_t target = 1;
  tr.states.push_back(s);
  double err = 0.0;
  for (int t = 0; t < cfg.horizon; ++t) {
    Vec to = wps[target] - s;
    double dist = to.norm();
    if (dist < 1e-9) {
      target = (target + 1) % n;
      to = wps[target] - s;
      dist = to.norm();
    }
    const double prev_dist = (wps[(target + n - 1) % n] - s).norm();
    const bool slow = std::min(dist, prev_dist) < cfg.slow_radius;
    const double speed = cfg.expert_speed * (slow ? cfg.slow_factor : 1.0);
    const double stepsize = std::min(speed, dist);
    const Vec a = (to / dist) * (stepsize / cfg.max_speed);
    const StepResult r = pointmass_step(s, a, cfg, rng);
    s = r.next_state;
    if ((wps[target] - s).norm() < 1e-9) target = (target + 1) % n;
    err += segment_distance(s, wps[(target + n - 1) % n], wps[target]);
    tr.actions.push_back(a);
    tr.states.push_back(s);
  }
  tr.tracking_error = err / cfg.horizon;
  return tr;
}

double waypoint_completion(const std::vector<Vec>& positions, const PointMassConfig& cfg) {
  const std::vector<Vec> wps = PointMassEnv(cfg).waypoints();
  const auto n = wps.size();
  if (positions.empty()) return 0.0;
  // Start from whichever waypoint is reached first, then require loop order.
  std::size_t next = n;
  std::size_t done = 0;
  for (const Vec& p : positions) {
    if (next == n) {
      for (std::size_t i = 0; i < n; ++i)
        if ((p - wps[i]).norm() <= cfg.waypoint_tolerance) {
          next = (i + 1) % n;
          done = 1;
          break;
        }
      continue;
    }
    if ((p - wps[next]).norm() <= cfg.waypoint_tolerance) {
      next = (next + 1) % n;
      if (++done == n) break;
    }
  }
  return static_cast<double>(done) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

Ranges fit_ranges(const std::vector<Vec>& rollouts, const std::vector<Vec>& demos) {
  VDL_CONTRACT(!rollouts.empty() || !demos.empty(), "fit_ranges: no data");
  const Eigen::Index d = rollouts.empty() ? demos.front().size() : rollouts.front().size();
  Ranges r{Vec::Constant(d, std::numeric_limits<double>::infinity()),
           Vec::Constant(d, -std::numeric_limits<double>::infinity())};
  for (const auto* set : {&rollouts, &demos})
    for (const Vec& v : *set) {
      VDL_CONTRACT(v.size() == d, "fit_ranges: inconsistent dimensions");
      r.lo = r.lo.cwiseMin(v);
      r.hi = r.hi.cwiseMax(v);
    }
  return r;
}

Ranges ranges_from_bounds(const Mat& bounds) { return {bounds.col(0), bounds.col(1)}; }

Vec normalize_state(const Vec& raw, const Ranges& r) {
  VDL_CONTRACT(raw.size() == r.lo.size() && r.hi.size() == r.lo.size(), "normalize_state: dimension mismatch");
  Vec out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double span = r.hi[i] - r.lo[i];
    out[i] = span > 0.0 ? 2.0 * (raw[i] - r.lo[i]) / span - 1.0 : 0.0;
  }
  return out;
}

Vec denormalize_state(const Vec& norm, const Ranges& r) {
  VDL_CONTRACT(norm.size() == r.lo.size() && r.hi.size() == r.lo.size(), "denormalize_state: dimension mismatch");
  Vec out(norm.size());
  for (Eigen::Index i = 0; i < norm.size(); ++i) {
    const double span = r.hi[i] - r.lo[i];
    out[i] = span > 0.0 ? r.lo[i] + 0.5 * (norm[i] + 1.0) * span : r.lo[i];
  }
  return out;
}

DemoSet expert_demos(const PointMassConfig& cfg, int n_trajectories, int stride,
                     bool augment_prev_action, Rng& rng) {
  VDL_CONTRACT(n_trajectories > 0 && stride > 0, "expert_demos: need trajectories and a positive stride");
  DemoSet d;
  d.stride = stride;
  d.augmented = augment_prev_action;
  if (augment_prev_action) d.names = {"prev_ax", "prev_ay"};
  d.names.push_back("x");
  d.names.push_back("y");
  for (int k = 0; k < n_trajectories; ++k) {
    Rng traj_rng = rng.fork(static_cast<std::uint64_t>(k));
    const ExpertTrace tr = expert_rollout(cfg, traj_rng);
    for (std::size_t t = 0; t < tr.actions.size(); t += static_cast<std::size_t>(stride)) {
      const Vec& s = tr.states[t];
      if (!augment_prev_action) {
        d.states.push_back(s);
        continue;
      }
      const Vec prev = t == 0 ? Vec(Vec::Zero(2)) : tr.actions[t - 1];
      d.states.push_back(concat({&prev, &s}));
    }
  }
  return d;
}

void write_demo_csv(std::ostream& os, const DemoSet& demos) {
  for (std::size_t i = 0; i < demos.names.size(); ++i) os << (i ? "," : "") << demos.names[i];
  os << '\n';
  os.precision(17);
  for (const Vec& s : demos.states) {
    for (Eigen::Index i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << '\n';
  }
}

DemoSet read_demo_csv(std::istream& is) {
  DemoSet d;
  std::string line;
  VDL_REQUIRE(static_cast<bool>(std::getline(is, line)), ErrorCode::kIo, "demo csv: missing header");
  {
    std::stringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ',')) d.names.push_back(name);
  }
  VDL_REQUIRE(!d.names.empty(), ErrorCode::kIo, "demo csv: empty header");
  d.augmented = d.names.front() == "prev_ax";
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kIo, "demo csv: bad number on row " + std::to_string(row));
      }
    }
    VDL_REQUIRE(vals.size() == d.names.size(), ErrorCode::kIo,
                "demo csv: row " + std::to_string(row) + " has the wrong column count");
    d.states.push_back(Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size())));
  }
  VDL_REQUIRE(!d.states.empty(), ErrorCode::kIo, "demo csv: no rows");
  return d;
}

}  // namespace vdl
