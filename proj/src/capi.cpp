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

#include "vdlab/experiment.hpp"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

struct vdl_config {
  vdl::Assignments assignments;
};

namespace {

thread_local std::string g_last_error;

vdl_status fail(vdl_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
vdl_status guarded(F&& f) {
  try {
    f();
    return VDL_OK;
  } catch (const vdl::Error& e) {
    return fail(static_cast<vdl_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(VDL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(VDL_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void check_value(const std::string& key, const std::string& value) {
  vdl::ExperimentConfig scratch;
  vdl::apply_assignment(scratch, key, value);
}

vdl_status from_text(const std::string& text, vdl_config** out) {
  return guarded([&] {
    auto cfg = std::make_unique<vdl_config>();
    cfg->assignments = vdl::parse_assignments(text);
    for (const auto& [k, v] : cfg->assignments) check_value(k, v);
    *out = cfg.release();
  });
}

}  // namespace

#define VDL_NEED(ptr)                                                      \
  do {                                                                     \
    if (!(ptr)) return fail(VDL_ERR_INVALID_ARGUMENT, #ptr " is null");    \
  } while (0)

extern "C" {

const char* vdl_version(void) { return "0.1.0"; }

const char* vdl_last_error(void) { return g_last_error.c_str(); }

const char* vdl_status_name(vdl_status status) {
  switch (status) {
    case VDL_OK: return "ok";
    case VDL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case VDL_ERR_CONFIG: return "config error";
    case VDL_ERR_IO: return "io error";
    case VDL_ERR_NUMERIC: return "numeric error";
    case VDL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void vdl_string_free(char* s) { std::free(s); }

vdl_status vdl_config_new(vdl_config** out) {
  VDL_NEED(out);
  return guarded([&] { *out = new vdl_config(); });
}

vdl_status vdl_config_parse(const char* text, vdl_config** out) {
  VDL_NEED(text);
  VDL_NEED(out);
  return from_text(text, out);
}

vdl_status vdl_config_load(const char* path, vdl_config** out) {
  VDL_NEED(path);
  VDL_NEED(out);
  std::string text;
  const vdl_status s = guarded([&] { text = vdl::read_file(path); });
  return s == VDL_OK ? from_text(text, out) : s;
}

vdl_status vdl_config_set(vdl_config* cfg, const char* key, const char* value) {
  VDL_NEED(cfg);
  VDL_NEED(key);
  VDL_NEED(value);
  return guarded([&] {
    check_value(key, value);
    cfg->assignments.emplace_back(key, value);
  });
}

vdl_status vdl_config_emit(const vdl_config* cfg, char** out) {
  VDL_NEED(cfg);
  VDL_NEED(out);
  return guarded([&] { *out = dup_string(vdl::emit_config(vdl::resolve_config(cfg->assignments))); });
}

void vdl_config_free(vdl_config* cfg) { delete cfg; }

vdl_status vdl_run(const vdl_config* cfg, char** out_dir) {
  VDL_NEED(cfg);
  return guarded([&] {
    const vdl::RunResult r = vdl::run_experiment(vdl::resolve_config(cfg->assignments));
    if (out_dir) *out_dir = dup_string(r.out_dir);
  });
}

vdl_status vdl_run_sweep(const vdl_config* cfg, uint64_t first, uint64_t last, int workers) {
  VDL_NEED(cfg);
  return guarded([&] { vdl::run_sweep(vdl::resolve_config(cfg->assignments), first, last, workers); });
}

vdl_status vdl_evaluate(const vdl_config* cfg, const char* checkpoint_path, int n_episodes, uint64_t seed,
                        double* score) {
  VDL_NEED(cfg);
  VDL_NEED(checkpoint_path);
  VDL_NEED(score);
  return guarded([&] {
    *score = vdl::evaluate_checkpoint(vdl::resolve_config(cfg->assignments), checkpoint_path, n_episodes, seed);
  });
}

vdl_status vdl_oracle_report(const vdl_config* cfg, const char* path) {
  VDL_NEED(cfg);
  VDL_NEED(path);
  return guarded([&] {
    vdl::Assignments a = cfg->assignments;
    a.emplace_back("algo", "oracle-report");
    a.emplace_back("env", "cliffwalk");
    vdl::write_file(path, vdl::oracle_report_csv(vdl::resolve_config(a)));
  });
}

vdl_status vdl_demo_gen(const vdl_config* cfg, const char* path) {
  VDL_NEED(cfg);
  VDL_NEED(path);
  return guarded([&] {
    vdl::Assignments a = cfg->assignments;
    a.emplace_back("algo", "vdi");
    a.emplace_back("env", "pointmass");
    vdl::write_file(path, vdl::demo_csv(vdl::resolve_config(a)));
  });
}

}  // extern "C"
