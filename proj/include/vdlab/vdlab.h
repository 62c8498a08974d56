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

#ifndef VDLAB_VDLAB_H
#define VDLAB_VDLAB_H

/* C interface to the vdlab experiment harness.
 *
 * Every call returns a vdl_status. On failure the message is available from
 * vdl_last_error() on the same thread until the next failing call. Strings
 * returned through `char**` are owned by the caller and released with
 * vdl_string_free(). */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define VDL_API __declspec(dllexport)
#else
#define VDL_API __attribute__((visibility("default")))
#endif

typedef enum vdl_status {
  VDL_OK = 0,
  VDL_ERR_INVALID_ARGUMENT = 1,
  VDL_ERR_CONFIG = 2,
  VDL_ERR_IO = 3,
  VDL_ERR_NUMERIC = 4,
  VDL_ERR_INTERNAL = 5
} vdl_status;

/* An ordered list of key = value assignments. Later assignments win;
 * defaults come from the algorithm/environment pair when resolved. */
typedef struct vdl_config vdl_config;

VDL_API const char* vdl_version(void);
VDL_API const char* vdl_last_error(void);
VDL_API const char* vdl_status_name(vdl_status status);
VDL_API void vdl_string_free(char* s);

VDL_API vdl_status vdl_config_new(vdl_config** out);
VDL_API vdl_status vdl_config_parse(const char* text, vdl_config** out);
VDL_API vdl_status vdl_config_load(const char* path, vdl_config** out);
/* Rejects unknown keys and values of the wrong type immediately. */
VDL_API vdl_status vdl_config_set(vdl_config* cfg, const char* key, const char* value);
/* Resolves and validates, then writes every key with its effective value. */
VDL_API vdl_status vdl_config_emit(const vdl_config* cfg, char** out);
VDL_API void vdl_config_free(vdl_config* cfg);

/* Trains and writes metrics.csv, config.toml and checkpoint.json (or
 * oracle_report.csv for the oracle-report algorithm). */
VDL_API vdl_status vdl_run(const vdl_config* cfg, char** out_dir);
/* Seeds first..last, each in its own directory, on up to `workers` threads. */
VDL_API vdl_status vdl_run_sweep(const vdl_config* cfg, uint64_t first, uint64_t last, int workers);

VDL_API vdl_status vdl_evaluate(const vdl_config* cfg, const char* checkpoint_path, int n_episodes,
                                uint64_t seed, double* score);

VDL_API vdl_status vdl_oracle_report(const vdl_config* cfg, const char* path);
VDL_API vdl_status vdl_demo_gen(const vdl_config* cfg, const char* path);

#ifdef __cplusplus
}
#endif

#endif
