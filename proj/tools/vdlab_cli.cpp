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

#include "vdlab/vdlab.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace {

struct Common {
  std::string config_path;
  std::optional<std::string> algo, env, out;
  std::optional<unsigned long long> seed;
  std::optional<long> iters;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c, bool with_run_flags) {
  cmd->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--algo", c.algo, "uvd | her | td3 | vdi | oracle-report");
  cmd->add_option("--env", c.env, "cliffwalk | slide | pointmass");
  cmd->add_option("--seed", c.seed, "random seed");
  if (with_run_flags) {
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--iters", c.iters, "iteration budget");
  }
  cmd->add_option("--set", c.sets, "extra key=value override (repeatable)");
}

int report(vdl_status s) {
  if (s == VDL_OK) return 0;
  std::fprintf(stderr, "vdlab: %s: %s\n", vdl_status_name(s), vdl_last_error());
  return static_cast<int>(s);
}

// Config file first, then flags, so flags win.
vdl_status build_config(const Common& c, vdl_config** out) {
  vdl_status s = c.config_path.empty() ? vdl_config_new(out) : vdl_config_load(c.config_path.c_str(), out);
  if (s != VDL_OK) return s;
  std::vector<std::pair<std::string, std::string>> flags;
  if (c.algo) flags.emplace_back("algo", *c.algo);
  if (c.env) flags.emplace_back("env", *c.env);
  if (c.seed) flags.emplace_back("seed", std::to_string(*c.seed));
  if (c.iters) flags.emplace_back("iterations", std::to_string(*c.iters));
  if (c.out) flags.emplace_back("out", *c.out);
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      vdl_config_free(*out);
      *out = nullptr;
      std::fprintf(stderr, "vdlab: --set expects key=value, got '%s'\n", kv.c_str());
      return VDL_ERR_INVALID_ARGUMENT;
    }
    flags.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : flags) {
    s = vdl_config_set(*out, k.c_str(), v.c_str());
    if (s != VDL_OK) {
      vdl_config_free(*out);
      *out = nullptr;
      return s;
    }
  }
  return VDL_OK;
}

bool parse_seed_range(const std::string& text, unsigned long long& first, unsigned long long& last) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) return false;
  try {
    std::size_t used = 0;
    const std::string a = text.substr(0, dots), b = text.substr(dots + 2);
    first = std::stoull(a, &used);
    if (used != a.size()) return false;
    last = std::stoull(b, &used);
    return used == b.size() && first <= last;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vdlab: goal-conditioned value densities and imitation"};
  app.set_version_flag("--version", vdl_version());
  app.require_subcommand(1);

  Common run_c, eval_c, oracle_c, demo_c;
  std::string seeds;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto* run = app.add_subcommand("run", "train one seed, or a sweep with --seeds a..b");
  add_common(run, run_c, true);
  run->add_option("--seeds", seeds, "inclusive seed range a..b run as independent workers");
  run->add_option("--workers", workers, "parallel runs in a sweep")->check(CLI::PositiveNumber);

  std::string checkpoint;
  int episodes = 100;
  unsigned long long eval_seed = 0;
  auto* evaluate = app.add_subcommand("evaluate", "greedy rollouts of a saved checkpoint");
  add_common(evaluate, eval_c, false);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint.json from a run")->required();
  evaluate->add_option("--episodes", episodes, "number of rollouts");
  evaluate->add_option("--eval-seed", eval_seed, "seed for the evaluation rollouts");

  std::string oracle_out = "oracle_report.csv";
  auto* oracle = app.add_subcommand("oracle-report", "exact vs hindsight Q on the cliffwalk");
  add_common(oracle, oracle_c, false);
  oracle->add_option("--out", oracle_out, "CSV path");

  std::string demo_out = "demos.csv";
  auto* demo = app.add_subcommand("demo-gen", "write expert point-mass demonstrations as CSV");
  add_common(demo, demo_c, false);
  demo->add_option("--out", demo_out, "CSV path");

  CLI11_PARSE(app, argc, argv);

  vdl_config* cfg = nullptr;
  int rc = 0;
  if (run->parsed()) {
    unsigned long long first = 0, last = 0;
    if (!seeds.empty() && !parse_seed_range(seeds, first, last)) {
      std::fprintf(stderr, "vdlab: --seeds expects a..b with a <= b, got '%s'\n", seeds.c_str());
      return VDL_ERR_INVALID_ARGUMENT;
    }
    rc = report(build_config(run_c, &cfg));
    if (rc == 0 && seeds.empty()) {
      char* dir = nullptr;
      rc = report(vdl_run(cfg, &dir));
      if (rc == 0) std::printf("%s\n", dir);
      vdl_string_free(dir);
    } else if (rc == 0) {
      rc = report(vdl_run_sweep(cfg, first, last, workers));
    }
  } else if (evaluate->parsed()) {
    rc = report(build_config(eval_c, &cfg));
    double score = 0.0;
    if (rc == 0) rc = report(vdl_evaluate(cfg, checkpoint.c_str(), episodes, eval_seed, &score));
    if (rc == 0) std::printf("%.6f\n", score);
  } else if (oracle->parsed()) {
    rc = report(build_config(oracle_c, &cfg));
    if (rc == 0) rc = report(vdl_oracle_report(cfg, oracle_out.c_str()));
  } else if (demo->parsed()) {
    rc = report(build_config(demo_c, &cfg));
    if (rc == 0) rc = report(vdl_demo_gen(cfg, demo_out.c_str()));
  }
  vdl_config_free(cfg);
  return rc;
}
