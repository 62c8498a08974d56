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

// Experiment harness: flat key = value configs, seeded runs that emit
// metrics.csv / config.toml / checkpoint.json, checkpoint evaluation, the
// cliffwalk bias report and demo generation.

#include "vdlab/agent.hpp"
#include "vdlab/oracle.hpp"
#include "vdlab/vdi.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace vdl {

struct ExperimentConfig {
  std::string algo = "uvd";   // uvd | her | td3 | vdi | oracle-report
  std::string env = "slide";  // cliffwalk | slide | pointmass
  std::uint64_t seed = 1;
  long iterations = 1000;
  std::string out;            // empty: <output root>/<algo>-<env>-s<seed>
  int eval_every = 50;
  int eval_episodes = 50;

  UvdConfig agent;            // uvd, her, td3
  VdiConfig vdi;
  int demo_trajectories = 1;
  int demo_stride = 20;
  std::uint64_t demo_seed = 1234;
  std::string demo_file;      // DemoSet CSV; empty: generate from the expert

  CliffWalkConfig cliffwalk;
  int cliffwalk_horizon = 40;
  SlideConfig slide;
  PointMassConfig pointmass;

  void validate() const;
  bool goal_reaching() const { return algo == "uvd" || algo == "her" || algo == "td3"; }
};

using Assignments = std::vector<std::pair<std::string, std::string>>;

// Defaults for an algorithm/environment pair.
ExperimentConfig default_config(const std::string& algo, const std::string& env);

// `key = value` lines; `#` starts a comment, blank lines are skipped and
// string values may be double-quoted. Throws kConfig with the line number.
Assignments parse_assignments(const std::string& text);

// Starts from default_config for the assigned (or default) algo/env, then
// applies the assignments in order. Unknown keys and malformed values throw
// kConfig.
ExperimentConfig resolve_config(const Assignments& assignments);
// Applies one assignment without validating the whole config.
void apply_assignment(ExperimentConfig& cfg, const std::string& key, const std::string& value);
ExperimentConfig parse_config(const std::string& text);

// Every key, sorted, in a form parse_config reads back exactly.
std::string emit_config(const ExperimentConfig& cfg);
std::vector<std::string> config_keys();

std::unique_ptr<GoalEnv> make_env(const ExperimentConfig& cfg);
DemoSet load_demos(const ExperimentConfig& cfg);

// Not-applicable fields are NaN and print as empty CSV cells.
struct MetricsRecord {
  long iteration = 0;
  long env_steps = 0;
  double score = 0.0;        // success rate, or expert-relative waypoint completion
  double mean_return = 0.0;
  double critic_loss = 0.0;
  double density_nll = 0.0;
  double q_error = 0.0;      // cliffwalk only
};

std::string metrics_header();
std::string metrics_row(const MetricsRecord& r);

// Output directory for a config: cfg.out, else $VDL_OUT_DIR (or "runs")
// joined with <algo>-<env>-s<seed>.
std::string output_dir(const ExperimentConfig& cfg);

struct RunResult {
  std::string out_dir;
  std::vector<MetricsRecord> records;
};

RunResult run_experiment(const ExperimentConfig& cfg);

// Runs seeds first..last with up to `workers` threads; each run writes to
// its own directory. Returns results in seed order.
std::vector<RunResult> run_sweep(const ExperimentConfig& cfg, std::uint64_t first, std::uint64_t last,
                                 int workers);

// Greedy rollouts of a saved checkpoint: success rate for goal reaching,
// expert-relative waypoint completion for imitation.
double evaluate_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path, int n_episodes,
                           std::uint64_t seed);

// Mean absolute gap between the critic and exact policy evaluation of the
// actor's greedy moves, over grid states, moves and goal cells.
double cliffwalk_q_error(const GoalAgent& agent);

// Exact vs hindsight-fixed-point Q for the optimal policy toward the
// cliffwalk goal cell, one row per (state, move).
std::string oracle_report_csv(const ExperimentConfig& cfg);

// Expert demonstrations for the config, as DemoSet CSV.
std::string demo_csv(const ExperimentConfig& cfg);

// Checkpoints: named networks serialized as JSON with shapes and base64
// little-endian doubles.
struct Checkpoint {
  std::string algo;
  std::string env;
  std::map<std::string, Mlp> mlps;
  std::map<std::string, Flow> flows;
};

std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);
Checkpoint make_checkpoint(const std::string& algo, const std::string& env, const AgentNets& nets);
Checkpoint make_checkpoint(const std::string& algo, const std::string& env, const VdiNets& nets);
void restore(const Checkpoint& ck, AgentNets& nets);
void restore(const Checkpoint& ck, VdiNets& nets);

std::string base64_encode_doubles(const double* data, std::size_t n);
std::vector<double> base64_decode_doubles(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace vdl
