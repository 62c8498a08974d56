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

#include "vdlab/experiment.hpp"

#include <json.hpp>
#include <sodium.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace vdl {

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw Error(ErrorCode::kConfig, "config key '" + key + "': cannot read '" + value + "' as " + what);
}

double parse_double(const std::string& key, const std::string& v) {
  if (v == "nan") return kNaN;
  if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
  if (v == "-inf") return -std::numeric_limits<double>::infinity();
  double out = 0.0;
  const char* b = v.data();
  if (!v.empty() && v[0] == '+') ++b;
  const auto [end, ec] = std::from_chars(b, v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string unquote(const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') return v;
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\' && i + 2 < v.size()) ++i;
    out += v[i];
  }
  return out;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::string body = trim(v);
  if (body.size() < 2 || body.front() != '[' || body.back() != ']') bad_value(key, v, "a list like [64, 64]");
  body = body.substr(1, body.size() - 2);
  std::vector<int> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      if (out.empty() && trim(body).empty()) break;
      bad_value(key, v, "a list like [64, 64]");
    }
    out.push_back(parse_integer<int>(key, item));
  }
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out + "]";
}

struct KeyDef {
  std::function<std::string(ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <class T>
using Field = std::function<T&(ExperimentConfig&)>;

KeyDef dbl(Field<double> f) {
  return {[f](ExperimentConfig& c) { return format_double(f(c)); },
          [f](ExperimentConfig& c, const std::string& k, const std::string& v) { f(c) = parse_double(k, v); }};
}

template <class T>
KeyDef integer(Field<T> f) {
  return {[f](ExperimentConfig& c) { return std::to_string(f(c)); },
          [f](ExperimentConfig& c, const std::string& k, const std::string& v) { f(c) = parse_integer<T>(k, v); }};
}

KeyDef boolean(Field<bool> f) {
  return {[f](ExperimentConfig& c) { return std::string(f(c) ? "true" : "false"); },
          [f](ExperimentConfig& c, const std::string& k, const std::string& v) { f(c) = parse_bool(k, v); }};
}

KeyDef str(Field<std::string> f) {
  return {[f](ExperimentConfig& c) { return quote(f(c)); },
          [f](ExperimentConfig& c, const std::string&, const std::string& v) { f(c) = unquote(v); }};
}

KeyDef list(Field<std::vector<int>> f) {
  return {[f](ExperimentConfig& c) { return format_int_list(f(c)); },
          [f](ExperimentConfig& c, const std::string& k, const std::string& v) { f(c) = parse_int_list(k, v); }};
}

#define VDL_FIELD(T, expr) Field<T>([](ExperimentConfig & c) -> T& { return expr; })

const std::map<std::string, KeyDef>& registry() {
  static const std::map<std::string, KeyDef> keys = [] {
    std::map<std::string, KeyDef> k;
    k["algo"] = str(VDL_FIELD(std::string, c.algo));
    k["env"] = str(VDL_FIELD(std::string, c.env));
    k["seed"] = integer<std::uint64_t>(VDL_FIELD(std::uint64_t, c.seed));
    k["iterations"] = integer<long>(VDL_FIELD(long, c.iterations));
    k["out"] = str(VDL_FIELD(std::string, c.out));
    k["eval_every"] = integer<int>(VDL_FIELD(int, c.eval_every));
    k["eval_episodes"] = integer<int>(VDL_FIELD(int, c.eval_episodes));

    k["agent.gamma"] = dbl(VDL_FIELD(double, c.agent.gamma));
    k["agent.truncation"] = integer<int>(VDL_FIELD(int, c.agent.truncation));
    k["agent.lambda"] = dbl(VDL_FIELD(double, c.agent.lambda));
    k["agent.spatial_smoothing"] = dbl(VDL_FIELD(double, c.agent.spatial_sigma));
    k["agent.explore_sigma"] = dbl(VDL_FIELD(double, c.agent.explore_sigma));
    k["agent.exploration"] = dbl(VDL_FIELD(double, c.agent.random_eps));
    k["agent.target_sync"] = integer<int>(VDL_FIELD(int, c.agent.target_sync));
    k["agent.logit_averaging"] = boolean(VDL_FIELD(bool, c.agent.logit_averaging));
    k["agent.batch_size"] = integer<int>(VDL_FIELD(int, c.agent.batch));
    k["agent.her_k"] = integer<int>(VDL_FIELD(int, c.agent.her_k));
    k["agent.actor_hidden"] = list(VDL_FIELD(std::vector<int>, c.agent.actor_hidden));
    k["agent.critic_hidden"] = list(VDL_FIELD(std::vector<int>, c.agent.critic_hidden));
    k["agent.flow_hidden"] = list(VDL_FIELD(std::vector<int>, c.agent.flow_hidden));
    k["agent.flow_layers"] = integer<int>(VDL_FIELD(int, c.agent.flow_layers));
    k["agent.lr_actor"] = dbl(VDL_FIELD(double, c.agent.actor_lr));
    k["agent.lr_critic"] = dbl(VDL_FIELD(double, c.agent.critic_lr));
    k["agent.lr_flow"] = dbl(VDL_FIELD(double, c.agent.flow_lr));
    k["agent.flow_l2"] = dbl(VDL_FIELD(double, c.agent.flow_l2));
    k["agent.long_buffer"] = integer<std::size_t>(VDL_FIELD(std::size_t, c.agent.long_capacity));
    k["agent.short_buffer"] = integer<std::size_t>(VDL_FIELD(std::size_t, c.agent.short_capacity));
    k["agent.updates_per_iteration"] = integer<int>(VDL_FIELD(int, c.agent.updates_per_iteration));
    k["agent.density_updates_per_iteration"] = integer<int>(VDL_FIELD(int, c.agent.density_updates_per_iteration));
    k["agent.warmup_episodes"] = integer<int>(VDL_FIELD(int, c.agent.warmup_episodes));

    k["vdi.gamma"] = dbl(VDL_FIELD(double, c.vdi.gamma));
    k["vdi.truncation"] = integer<int>(VDL_FIELD(int, c.vdi.truncation));
    k["vdi.lambda"] = dbl(VDL_FIELD(double, c.vdi.lambda));
    k["vdi.spatial_smoothing"] = dbl(VDL_FIELD(double, c.vdi.spatial_sigma));
    k["vdi.explore_sigma"] = dbl(VDL_FIELD(double, c.vdi.explore_sigma));
    k["vdi.action_l2"] = dbl(VDL_FIELD(double, c.vdi.action_l2));
    k["vdi.target_sync"] = integer<int>(VDL_FIELD(int, c.vdi.target_sync));
    k["vdi.batch_size"] = integer<int>(VDL_FIELD(int, c.vdi.batch));
    k["vdi.actor_hidden"] = list(VDL_FIELD(std::vector<int>, c.vdi.actor_hidden));
    k["vdi.critic_hidden"] = list(VDL_FIELD(std::vector<int>, c.vdi.critic_hidden));
    k["vdi.flow_hidden"] = list(VDL_FIELD(std::vector<int>, c.vdi.flow_hidden));
    k["vdi.flow_layers"] = integer<int>(VDL_FIELD(int, c.vdi.flow_layers));
    k["vdi.lr_actor"] = dbl(VDL_FIELD(double, c.vdi.actor_lr));
    k["vdi.lr_critic"] = dbl(VDL_FIELD(double, c.vdi.critic_lr));
    k["vdi.lr_flow"] = dbl(VDL_FIELD(double, c.vdi.flow_lr));
    k["vdi.flow_l2"] = dbl(VDL_FIELD(double, c.vdi.flow_l2));
    k["vdi.long_buffer"] = integer<std::size_t>(VDL_FIELD(std::size_t, c.vdi.long_capacity));
    k["vdi.short_buffer"] = integer<std::size_t>(VDL_FIELD(std::size_t, c.vdi.short_capacity));
    k["vdi.updates_per_iteration"] = integer<int>(VDL_FIELD(int, c.vdi.updates_per_iteration));
    k["vdi.density_updates_per_iteration"] = integer<int>(VDL_FIELD(int, c.vdi.density_updates_per_iteration));
    k["vdi.warmup_episodes"] = integer<int>(VDL_FIELD(int, c.vdi.warmup_episodes));
    k["vdi.augment_prev_action"] = boolean(VDL_FIELD(bool, c.vdi.augment_prev_action));
    k["vdi.inverse_density"] = boolean(VDL_FIELD(bool, c.vdi.inverse_density));
    k["vdi.weight_bound"] = dbl(VDL_FIELD(double, c.vdi.weights.bound));
    k["vdi.demo_trajectories"] = integer<int>(VDL_FIELD(int, c.demo_trajectories));
    k["vdi.demo_stride"] = integer<int>(VDL_FIELD(int, c.demo_stride));
    k["vdi.demo_seed"] = integer<std::uint64_t>(VDL_FIELD(std::uint64_t, c.demo_seed));
    k["vdi.demo_file"] = str(VDL_FIELD(std::string, c.demo_file));

    k["cliffwalk.width"] = integer<int>(VDL_FIELD(int, c.cliffwalk.width));
    k["cliffwalk.height"] = integer<int>(VDL_FIELD(int, c.cliffwalk.height));
    k["cliffwalk.slip"] = dbl(VDL_FIELD(double, c.cliffwalk.slip));
    k["cliffwalk.horizon"] = integer<int>(VDL_FIELD(int, c.cliffwalk_horizon));
    k["cliffwalk.start_x"] = integer<int>(VDL_FIELD(int, c.cliffwalk.start[0]));
    k["cliffwalk.start_y"] = integer<int>(VDL_FIELD(int, c.cliffwalk.start[1]));
    k["cliffwalk.goal_x"] = integer<int>(VDL_FIELD(int, c.cliffwalk.goal[0]));
    k["cliffwalk.goal_y"] = integer<int>(VDL_FIELD(int, c.cliffwalk.goal[1]));

    k["slide.arena"] = dbl(VDL_FIELD(double, c.slide.arena));
    k["slide.friction"] = dbl(VDL_FIELD(double, c.slide.friction));
    k["slide.impulse"] = dbl(VDL_FIELD(double, c.slide.impulse));
    k["slide.actuation_horizon"] = integer<int>(VDL_FIELD(int, c.slide.actuation_horizon));
    k["slide.horizon"] = integer<int>(VDL_FIELD(int, c.slide.horizon));
    k["slide.epsilon"] = dbl(VDL_FIELD(double, c.slide.epsilon));
    k["slide.noise_scale"] = dbl(VDL_FIELD(double, c.slide.noise_scale));
    k["slide.start_x"] = dbl(VDL_FIELD(double, c.slide.start[0]));
    k["slide.start_y"] = dbl(VDL_FIELD(double, c.slide.start[1]));
    k["slide.start_jitter"] = dbl(VDL_FIELD(double, c.slide.start_jitter));
    k["slide.goal_lo"] = dbl(VDL_FIELD(double, c.slide.goal_lo));
    k["slide.goal_hi"] = dbl(VDL_FIELD(double, c.slide.goal_hi));

    k["pointmass.arena"] = dbl(VDL_FIELD(double, c.pointmass.arena));
    k["pointmass.max_speed"] = dbl(VDL_FIELD(double, c.pointmass.max_speed));
    k["pointmass.action_noise"] = dbl(VDL_FIELD(double, c.pointmass.action_noise));
    k["pointmass.horizon"] = integer<int>(VDL_FIELD(int, c.pointmass.horizon));
    k["pointmass.start_jitter"] = dbl(VDL_FIELD(double, c.pointmass.start_jitter));
    k["pointmass.n_waypoints"] = integer<int>(VDL_FIELD(int, c.pointmass.n_waypoints));
    k["pointmass.loop_radius"] = dbl(VDL_FIELD(double, c.pointmass.loop_radius));
    k["pointmass.expert_speed"] = dbl(VDL_FIELD(double, c.pointmass.expert_speed));
    k["pointmass.waypoint_tolerance"] = dbl(VDL_FIELD(double, c.pointmass.waypoint_tolerance));
    k["pointmass.slow_radius"] = dbl(VDL_FIELD(double, c.pointmass.slow_radius));
    k["pointmass.slow_factor"] = dbl(VDL_FIELD(double, c.pointmass.slow_factor));
    return k;
  }();
  return keys;
}

#undef VDL_FIELD

const KeyDef& key_def(const std::string& key) {
  const auto it = registry().find(key);
  VDL_REQUIRE(it != registry().end(), ErrorCode::kConfig, "unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto req = [](bool ok, const std::string& msg) { VDL_REQUIRE(ok, ErrorCode::kConfig, msg); };
  req(algo == "uvd" || algo == "her" || algo == "td3" || algo == "vdi" || algo == "oracle-report",
      "algo must be one of uvd, her, td3, vdi, oracle-report (got '" + algo + "')");
  req(env == "cliffwalk" || env == "slide" || env == "pointmass",
      "env must be one of cliffwalk, slide, pointmass (got '" + env + "')");
  if (goal_reaching()) req(env != "pointmass", algo + " needs a goal-reaching env (cliffwalk or slide)");
  if (algo == "vdi") req(env == "pointmass", "vdi runs on the pointmass env");
  if (algo == "oracle-report") req(env == "cliffwalk", "oracle-report runs on the cliffwalk env");
  req(iterations >= 0, "iterations must be non-negative");
  req(eval_every > 0 && eval_episodes > 0, "eval_every and eval_episodes must be positive");
  req(demo_trajectories > 0 && demo_stride > 0, "demo_trajectories and demo_stride must be positive");
  req(cliffwalk_horizon > 0, "cliffwalk.horizon must be positive");
  req(slide.horizon > 0 && pointmass.horizon > 0, "env horizons must be positive");
  agent.validate();
  vdi.validate();
}

ExperimentConfig default_config(const std::string& algo, const std::string& env) {
  ExperimentConfig c;
  c.algo = algo;
  c.env = env;
  if (env == "cliffwalk") {
    c.iterations = 800;
    c.eval_every = 50;
    c.eval_episodes = 100;
    c.cliffwalk_horizon = 20;
    c.agent.gamma = 0.95;
    c.agent.batch = 64;
    c.agent.random_eps = 0.3;
    c.agent.actor_hidden = c.agent.critic_hidden = c.agent.flow_hidden = {32, 32};
  } else if (env == "slide") {
    c.iterations = 1500;
    c.eval_every = 100;
    c.eval_episodes = 100;
    c.agent.spatial_sigma = 0.067;
    c.agent.logit_averaging = true;
  } else if (env == "pointmass") {
    c.iterations = 500;
    c.eval_every = 50;
    c.eval_episodes = 5;
    c.vdi.gamma = 0.95;
    c.vdi.explore_sigma = 0.8;
    c.vdi.action_l2 = 0.1;
    c.vdi.warmup_episodes = 10;
  }
  return c;
}

Assignments parse_assignments(const std::string& text) {
  Assignments out;
  std::stringstream ss(text);
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) {
    ++n;
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
      if (line[i] == '#' && !in_string) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    VDL_REQUIRE(eq != std::string::npos, ErrorCode::kConfig,
                "config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    VDL_REQUIRE(!key.empty(), ErrorCode::kConfig, "config line " + std::to_string(n) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

ExperimentConfig resolve_config(const Assignments& assignments) {
  std::string algo = "uvd", env;
  for (const auto& [k, v] : assignments) {
    key_def(k);
    if (k == "algo") algo = unquote(v);
    if (k == "env") env = unquote(v);
  }
  if (env.empty()) env = algo == "vdi" ? "pointmass" : algo == "oracle-report" ? "cliffwalk" : "slide";
  ExperimentConfig c = default_config(algo, env);
  for (const auto& [k, v] : assignments) key_def(k).set(c, k, v);
  c.validate();
  return c;
}

void apply_assignment(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  key_def(key).set(cfg, key, value);
}

ExperimentConfig parse_config(const std::string& text) { return resolve_config(parse_assignments(text)); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, d] : registry()) out.push_back(k);
  return out;
}

std::string emit_config(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  std::string out;
  for (const auto& [k, d] : registry()) out += k + " = " + d.get(c) + "\n";
  return out;
}

std::unique_ptr<GoalEnv> make_env(const ExperimentConfig& cfg) {
  if (cfg.env == "cliffwalk") return std::make_unique<CliffWalkEnv>(cfg.cliffwalk, cfg.cliffwalk_horizon);
  if (cfg.env == "slide") return std::make_unique<SlideEnv>(cfg.slide);
  if (cfg.env == "pointmass") return std::make_unique<PointMassEnv>(cfg.pointmass);
  throw Error(ErrorCode::kConfig, "unknown env '" + cfg.env + "'");
}

DemoSet load_demos(const ExperimentConfig& cfg) {
  if (!cfg.demo_file.empty()) {
    std::ifstream in(cfg.demo_file);
    VDL_REQUIRE(in.good(), ErrorCode::kIo, "cannot open demo file '" + cfg.demo_file + "'");
    return read_demo_csv(in);
  }
  Rng rng(cfg.demo_seed);
  return expert_demos(cfg.pointmass, cfg.demo_trajectories, cfg.demo_stride, cfg.vdi.augment_prev_action, rng);
}

std::string demo_csv(const ExperimentConfig& cfg) {
  std::ostringstream os;
  write_demo_csv(os, load_demos(cfg));
  return os.str();
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_header() { return "iteration,env_steps,score,mean_return,critic_loss,density_nll,q_error"; }

std::string metrics_row(const MetricsRecord& r) {
  auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  return std::to_string(r.iteration) + "," + std::to_string(r.env_steps) + "," + cell(r.score) + "," +
         cell(r.mean_return) + "," + cell(r.critic_loss) + "," + cell(r.density_nll) + "," + cell(r.q_error);
}

std::string output_dir(const ExperimentConfig& cfg) {
  if (!cfg.out.empty()) return cfg.out;
  const char* root = std::getenv("VDL_OUT_DIR");
  const std::filesystem::path base = root && *root ? root : "runs";
  return (base / (cfg.algo + "-" + cfg.env + "-s" + std::to_string(cfg.seed))).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  VDL_REQUIRE(in.good(), ErrorCode::kIo, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  VDL_REQUIRE(out.good(), ErrorCode::kIo, "cannot write '" + path + "'");
  out << contents;
  out.close();
  VDL_REQUIRE(out.good(), ErrorCode::kIo, "failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Oracles on cliffwalk

namespace {

Vec move_action(int move) {
  Vec a = Vec::Zero(2);
  switch (move) {
    case kUp: a(1) = 1.0; break;
    case kRight: a(0) = 1.0; break;
    case kDown: a(1) = -1.0; break;
    default: a(0) = -1.0; break;
  }
  return a;
}

std::vector<int> goal_cells(const CliffWalk& cw) {
  std::vector<int> cells;
  for (int s = 0; s < cw.cfg.width * cw.cfg.height; ++s)
    if (!cw.is_cliff[static_cast<std::size_t>(s)] && s != cw.start_state) cells.push_back(s);
  return cells;
}

}  // namespace

double cliffwalk_q_error(const GoalAgent& agent) {
  const auto* env = dynamic_cast<const CliffWalkEnv*>(&agent.env());
  VDL_REQUIRE(env != nullptr, ErrorCode::kInvalidArgument, "cliffwalk_q_error: agent is not on cliffwalk");
  const CliffWalk& cw = env->world();
  const DiscreteMdpSpec& mdp = cw.mdp;
  double total = 0.0;
  long count = 0;
  for (int g : goal_cells(cw)) {
    const Vec gc = env->coords_of(g);
    std::vector<int> moves(static_cast<std::size_t>(mdp.n_states), 0);
    for (int s = 0; s < mdp.n_states; ++s)
      if (cw.is_grid(s) && !cw.is_cliff[static_cast<std::size_t>(s)])
        moves[static_cast<std::size_t>(s)] = CliffWalkEnv::move_of(agent.policy(env->coords_of(s), gc));
    const Mat exact = exact_goal_q(mdp, TabularPolicy::deterministic(moves, mdp.n_actions), agent.config().gamma, g);
    for (int s = 0; s < mdp.n_states; ++s) {
      if (!cw.is_grid(s) || cw.is_cliff[static_cast<std::size_t>(s)]) continue;
      for (int a = 0; a < mdp.n_actions; ++a) {
        total += std::abs(agent.q_value(env->coords_of(s), move_action(a), gc) - exact(s, a));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

std::string oracle_report_csv(const ExperimentConfig& cfg) {
  const CliffWalk cw = cliffwalk_build(cfg.cliffwalk);
  const DiscreteMdpSpec& mdp = cw.mdp;
  const double gamma = cfg.agent.gamma;
  const int g = cw.goal_state;
  const OptimalControl opt = value_iteration(mdp, gamma, g);
  const TabularPolicy pi = TabularPolicy::deterministic(opt.policy, mdp.n_actions);
  const Mat exact = exact_goal_q(mdp, pi, gamma, g);
  const Mat her = her_fixed_point(mdp, pi, gamma, g, RelabelStrategy::kFuture);
  const std::vector<int> adjacent = cliff_adjacent_states(cw);
  static const char* names[] = {"up", "right", "down", "left"};
  std::string out = "state,x,y,move,cliff_adjacent,optimal_move,q_exact,q_her,q_bias\n";
  for (int s = 0; s < mdp.n_states; ++s) {
    if (!cw.is_grid(s) || cw.is_cliff[static_cast<std::size_t>(s)]) continue;
    const auto& xy = mdp.coords[static_cast<std::size_t>(s)];
    const bool adj = std::find(adjacent.begin(), adjacent.end(), s) != adjacent.end();
    for (int a = 0; a < mdp.n_actions; ++a) {
      out += std::to_string(s) + "," + std::to_string(xy[0]) + "," + std::to_string(xy[1]) + "," + names[a] + "," +
             (adj ? "1" : "0") + "," + (opt.policy[static_cast<std::size_t>(s)] == a ? "1" : "0") + "," +
             format_double(exact(s, a)) + "," + format_double(her(s, a)) + "," +
             format_double(her(s, a) - exact(s, a)) + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void ensure_sodium() {
  static const int ok = sodium_init();
  VDL_REQUIRE(ok >= 0, ErrorCode::kInternal, "libsodium failed to initialize");
}

}  // namespace

std::string base64_encode_doubles(const double* data, std::size_t n) {
  ensure_sodium();
  std::vector<unsigned char> bytes(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
  }
  const std::size_t len = sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // drop the terminator
  return out;
}

std::vector<double> base64_decode_doubles(const std::string& text) {
  ensure_sodium();
  std::vector<unsigned char> bytes(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const int rc = sodium_base642bin(bytes.data(), bytes.size(), text.data(), text.size(), nullptr, &len, nullptr,
                                   sodium_base64_VARIANT_ORIGINAL);
  VDL_REQUIRE(rc == 0 && len % 8 == 0, ErrorCode::kIo, "checkpoint: malformed base64 array");
  std::vector<double> out(len / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

namespace {

using nlohmann::json;

json mat_json(const Mat& m) {
  // Row-major element order.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  return {{"shape", {m.rows(), m.cols()}}, {"data", base64_encode_doubles(rm.data(), static_cast<std::size_t>(rm.size()))}};
}

json vec_json(const Vec& v) {
  return {{"shape", {v.size()}}, {"data", base64_encode_doubles(v.data(), static_cast<std::size_t>(v.size()))}};
}

Mat mat_from(const json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  VDL_REQUIRE(shape.size() == 2, ErrorCode::kIo, "checkpoint: matrix needs a 2D shape");
  const std::vector<double> d = base64_decode_doubles(j.at("data").get<std::string>());
  VDL_REQUIRE(static_cast<Eigen::Index>(d.size()) == shape[0] * shape[1], ErrorCode::kIo,
              "checkpoint: matrix data does not match its shape");
  Mat m(shape[0], shape[1]);
  for (Eigen::Index r = 0; r < shape[0]; ++r)
    for (Eigen::Index c = 0; c < shape[1]; ++c) m(r, c) = d[static_cast<std::size_t>(r * shape[1] + c)];
  return m;
}

Vec vec_from(const json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  VDL_REQUIRE(shape.size() == 1, ErrorCode::kIo, "checkpoint: vector needs a 1D shape");
  const std::vector<double> d = base64_decode_doubles(j.at("data").get<std::string>());
  VDL_REQUIRE(static_cast<Eigen::Index>(d.size()) == shape[0], ErrorCode::kIo,
              "checkpoint: vector data does not match its shape");
  return Eigen::Map<const Vec>(d.data(), shape[0]);
}

json mlp_json(const Mlp& m) {
  json layers = json::array();
  for (const DenseLayer& l : m.layers) layers.push_back({{"weight", mat_json(l.weight)}, {"bias", vec_json(l.bias)}});
  return {{"output", activation_name(m.output)}, {"layers", layers}};
}

Mlp mlp_from(const json& j) {
  Mlp m;
  m.output = activation_from_name(j.at("output").get<std::string>());
  for (const json& l : j.at("layers")) m.layers.push_back({mat_from(l.at("weight")), vec_from(l.at("bias"))});
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const DenseLayer& l = m.layers[i];
    VDL_REQUIRE(l.bias.size() == l.weight.rows(), ErrorCode::kIo, "checkpoint: bias does not match weight rows");
    if (i > 0)
      VDL_REQUIRE(l.weight.cols() == m.layers[i - 1].weight.rows(), ErrorCode::kIo,
                  "checkpoint: consecutive layers do not chain");
  }
  return m;
}

json flow_json(const Flow& f) {
  json layers = json::array();
  for (const CouplingLayer& l : f.layers())
    layers.push_back({{"passthrough", l.passthrough},
                      {"transformed", l.transformed},
                      {"scale_net", mlp_json(l.scale_net)},
                      {"shift_net", mlp_json(l.shift_net)}});
  return {{"dim", f.dim()}, {"cond_dim", f.cond_dim()}, {"logit_averaging", f.logit_averaging()}, {"layers", layers}};
}

Flow flow_from(const json& j) {
  std::vector<CouplingLayer> layers;
  for (const json& l : j.at("layers")) {
    CouplingLayer c;
    c.passthrough = l.at("passthrough").get<std::vector<int>>();
    c.transformed = l.at("transformed").get<std::vector<int>>();
    c.scale_net = mlp_from(l.at("scale_net"));
    c.shift_net = mlp_from(l.at("shift_net"));
    layers.push_back(std::move(c));
  }
  return Flow::from_parts(j.at("dim").get<int>(), j.at("cond_dim").get<int>(), j.at("logit_averaging").get<bool>(),
                          std::move(layers));
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ck) {
  json j;
  j["format"] = "vdlab-checkpoint";
  j["version"] = 1;
  j["algo"] = ck.algo;
  j["env"] = ck.env;
  j["byte_order"] = "little-endian float64, row-major";
  j["mlps"] = json::object();
  for (const auto& [name, m] : ck.mlps) j["mlps"][name] = mlp_json(m);
  j["flows"] = json::object();
  for (const auto& [name, f] : ck.flows) j["flows"][name] = flow_json(f);
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    VDL_REQUIRE(j.at("format") == "vdlab-checkpoint" && j.at("version") == 1, ErrorCode::kIo,
                "checkpoint: unsupported format or version");
    Checkpoint ck;
    ck.algo = j.at("algo").get<std::string>();
    ck.env = j.at("env").get<std::string>();
    for (const auto& [name, m] : j.at("mlps").items()) ck.mlps[name] = mlp_from(m);
    for (const auto& [name, f] : j.at("flows").items()) ck.flows.emplace(name, flow_from(f));
    return ck;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("checkpoint: ") + e.what());
  }
}

Checkpoint make_checkpoint(const std::string& algo, const std::string& env, const AgentNets& nets) {
  Checkpoint ck{algo, env, {}, {}};
  ck.mlps = {{"actor", nets.actor},
             {"critic1", nets.critic1},
             {"critic2", nets.critic2},
             {"actor_target", nets.actor_target},
             {"critic1_target", nets.critic1_target},
             {"critic2_target", nets.critic2_target}};
  if (nets.has_density) {
    ck.flows.emplace("density", nets.density);
    ck.flows.emplace("density_target", nets.density_target);
  }
  return ck;
}

Checkpoint make_checkpoint(const std::string& algo, const std::string& env, const VdiNets& nets) {
  Checkpoint ck{algo, env, {}, {}};
  ck.mlps = {{"actor", nets.actor},
             {"critic1", nets.critic1},
             {"critic2", nets.critic2},
             {"actor_target", nets.actor_target},
             {"critic1_target", nets.critic1_target},
             {"critic2_target", nets.critic2_target}};
  ck.flows.emplace("future", nets.future);
  ck.flows.emplace("future_target", nets.future_target);
  ck.flows.emplace("state_density", nets.state_density);
  ck.flows.emplace("state_density_target", nets.state_density_target);
  return ck;
}

namespace {

void take(const Checkpoint& ck, const std::string& name, Mlp& into) {
  const auto it = ck.mlps.find(name);
  VDL_REQUIRE(it != ck.mlps.end(), ErrorCode::kIo, "checkpoint: missing network '" + name + "'");
  VDL_REQUIRE(it->second.layers.size() == into.layers.size() && it->second.output == into.output, ErrorCode::kIo,
              "checkpoint: network '" + name + "' has a different architecture");
  for (std::size_t i = 0; i < into.layers.size(); ++i)
    VDL_REQUIRE(it->second.layers[i].weight.rows() == into.layers[i].weight.rows() &&
                    it->second.layers[i].weight.cols() == into.layers[i].weight.cols(),
                ErrorCode::kIo, "checkpoint: network '" + name + "' has different layer shapes");
  into = it->second;
}

void take(const Checkpoint& ck, const std::string& name, Flow& into) {
  const auto it = ck.flows.find(name);
  VDL_REQUIRE(it != ck.flows.end(), ErrorCode::kIo, "checkpoint: missing flow '" + name + "'");
  VDL_REQUIRE(it->second.dim() == into.dim() && it->second.cond_dim() == into.cond_dim() &&
                  it->second.layers().size() == into.layers().size(),
              ErrorCode::kIo, "checkpoint: flow '" + name + "' has a different architecture");
  into = it->second;
}

}  // namespace

void restore(const Checkpoint& ck, AgentNets& nets) {
  take(ck, "actor", nets.actor);
  take(ck, "critic1", nets.critic1);
  take(ck, "critic2", nets.critic2);
  take(ck, "actor_target", nets.actor_target);
  take(ck, "critic1_target", nets.critic1_target);
  take(ck, "critic2_target", nets.critic2_target);
  if (nets.has_density) {
    take(ck, "density", nets.density);
    take(ck, "density_target", nets.density_target);
  }
}

void restore(const Checkpoint& ck, VdiNets& nets) {
  take(ck, "actor", nets.actor);
  take(ck, "critic1", nets.critic1);
  take(ck, "critic2", nets.critic2);
  take(ck, "actor_target", nets.actor_target);
  take(ck, "critic1_target", nets.critic1_target);
  take(ck, "critic2_target", nets.critic2_target);
  take(ck, "future", nets.future);
  take(ck, "future_target", nets.future_target);
  take(ck, "state_density", nets.state_density);
  take(ck, "state_density_target", nets.state_density_target);
}

// ---------------------------------------------------------------------------
// Runs

namespace {

// Evaluation streams are separate from training so evaluation never shifts
// the training trajectory.
Rng eval_rng(std::uint64_t seed, long iteration) { return Rng(seed).fork(0x65766100ULL + static_cast<std::uint64_t>(iteration)); }

double expert_completion(const PointMassConfig& pc) {
  Rng rng(0);
  return waypoint_completion(expert_rollout(pc, rng).states, pc);
}

struct Window {
  double ret = 0.0, closs = 0.0, nll = 0.0;
  int n = 0, learned = 0, nll_count = 0;

  void add(double r, bool did_learn, double c, double d) {
    ret += r;
    ++n;
    if (!did_learn) return;
    closs += c;
    ++learned;
    if (std::isfinite(d)) nll += d, ++nll_count;
  }
  double mean_return() const { return n ? ret / n : kNaN; }
  double critic_loss() const { return learned ? closs / learned : kNaN; }
  double density_nll() const { return nll_count ? nll / nll_count : kNaN; }
};

void write_artifacts(const std::string& dir, const ExperimentConfig& cfg, const std::vector<MetricsRecord>& recs,
                     const Checkpoint& ck) {
  std::string csv = metrics_header() + "\n";
  for (const MetricsRecord& r : recs) csv += metrics_row(r) + "\n";
  write_file((std::filesystem::path(dir) / "metrics.csv").string(), csv);
  write_file((std::filesystem::path(dir) / "config.toml").string(), emit_config(cfg));
  write_file((std::filesystem::path(dir) / "checkpoint.json").string(), checkpoint_to_json(ck));
}

RunResult run_goal(const ExperimentConfig& cfg, const std::string& dir) {
  const Algo algo = algo_from_name(cfg.algo);
  GoalAgent agent(make_env(cfg), algo, cfg.agent, cfg.seed);
  RunResult res{dir, {}};
  Window w;
  for (long i = 1; i <= cfg.iterations; ++i) {
    const GoalAgent::Metrics m = agent.iterate();
    w.add(m.episode_return, m.learned, m.critic_loss, algo == Algo::kUvd ? m.density_nll : kNaN);
    if (i % cfg.eval_every != 0 && i != cfg.iterations) continue;
    MetricsRecord r;
    r.iteration = i;
    r.env_steps = agent.env_steps();
    Rng er = eval_rng(cfg.seed, i);
    r.score = agent.evaluate(cfg.eval_episodes, er);
    r.mean_return = w.mean_return();
    r.critic_loss = w.critic_loss();
    r.density_nll = w.density_nll();
    r.q_error = cfg.env == "cliffwalk" ? cliffwalk_q_error(agent) : kNaN;
    res.records.push_back(r);
    w = Window{};
  }
  write_artifacts(dir, cfg, res.records, make_checkpoint(cfg.algo, cfg.env, agent.nets()));
  return res;
}

RunResult run_vdi(const ExperimentConfig& cfg, const std::string& dir) {
  VdiAgent agent(cfg.pointmass, load_demos(cfg), cfg.vdi, cfg.seed);
  const double expert = expert_completion(cfg.pointmass);
  RunResult res{dir, {}};
  Window w;
  for (long i = 1; i <= cfg.iterations; ++i) {
    const VdiAgent::Metrics m = agent.iterate();
    w.add(kNaN, m.learned, m.critic_loss, m.future_nll);
    if (i % cfg.eval_every != 0 && i != cfg.iterations) continue;
    MetricsRecord r;
    r.iteration = i;
    r.env_steps = agent.env_steps();
    Rng er = eval_rng(cfg.seed, i);
    r.score = agent.evaluate(cfg.eval_episodes, er).waypoint_completion / expert;
    r.mean_return = kNaN;
    r.critic_loss = w.critic_loss();
    r.density_nll = w.density_nll();
    r.q_error = kNaN;
    res.records.push_back(r);
    w = Window{};
  }
  write_artifacts(dir, cfg, res.records, make_checkpoint(cfg.algo, cfg.env, agent.nets()));
  return res;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string dir = output_dir(cfg);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  VDL_REQUIRE(!ec, ErrorCode::kIo, "cannot create output directory '" + dir + "': " + ec.message());
  if (cfg.algo == "oracle-report") {
    write_file((std::filesystem::path(dir) / "oracle_report.csv").string(), oracle_report_csv(cfg));
    write_file((std::filesystem::path(dir) / "config.toml").string(), emit_config(cfg));
    return RunResult{dir, {}};
  }
  return cfg.algo == "vdi" ? run_vdi(cfg, dir) : run_goal(cfg, dir);
}

std::vector<RunResult> run_sweep(const ExperimentConfig& cfg, std::uint64_t first, std::uint64_t last,
                                 int workers) {
  VDL_REQUIRE(first <= last, ErrorCode::kInvalidArgument, "seed sweep: first seed exceeds last");
  VDL_REQUIRE(workers > 0, ErrorCode::kInvalidArgument, "seed sweep: need at least one worker");
  const std::size_t n = static_cast<std::size_t>(last - first + 1);
  std::vector<RunResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      ExperimentConfig c = cfg;
      c.seed = first + i;
      if (!cfg.out.empty()) c.out = (std::filesystem::path(cfg.out) / ("s" + std::to_string(c.seed))).string();
      try {
        results[i] = run_experiment(c);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(workers, static_cast<int>(n)); ++t) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

double evaluate_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path, int n_episodes,
                           std::uint64_t seed) {
  cfg.validate();
  VDL_REQUIRE(n_episodes > 0, ErrorCode::kInvalidArgument, "evaluate: need at least one episode");
  const Checkpoint ck = checkpoint_from_json(read_file(checkpoint_path));
  VDL_REQUIRE(ck.algo == cfg.algo && ck.env == cfg.env, ErrorCode::kConfig,
              "evaluate: checkpoint is for " + ck.algo + " on " + ck.env + ", config says " + cfg.algo + " on " +
                  cfg.env);
  Rng rng(seed);
  if (cfg.algo == "vdi") {
    VdiAgent agent(cfg.pointmass, load_demos(cfg), cfg.vdi, cfg.seed);
    restore(ck, agent.nets());
    return agent.evaluate(n_episodes, rng).waypoint_completion / expert_completion(cfg.pointmass);
  }
  VDL_REQUIRE(cfg.goal_reaching(), ErrorCode::kConfig, "evaluate: " + cfg.algo + " has no policy to evaluate");
  GoalAgent agent(make_env(cfg), algo_from_name(cfg.algo), cfg.agent, cfg.seed);
  restore(ck, agent.nets());
  return agent.evaluate(n_episodes, rng);
}

}  // namespace vdl
