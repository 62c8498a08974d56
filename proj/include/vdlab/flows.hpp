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

// Conditional RealNVP density estimator.
//
// Each coupling layer keeps the `passthrough` coordinates and applies an
// affine map to the `transformed` ones:
//
//   x_q = exp(a) * z_q + t,   a = tanh(scale_net([z_p, cond])),
//                             t = shift_net([z_p, cond])
//
// so the per-coordinate log-scale is bounded to [-1, 1]. The conditioning
// vector enters every layer. Density evaluation runs the layers backwards
// from data x to a standard-normal latent z.

#include "vdlab/numcore.hpp"

#include <vector>

namespace vdl {

struct CouplingLayer {
  std::vector<int> passthrough;
  std::vector<int> transformed;
  Mlp scale_net;  // tanh output, read as a log-scale
  Mlp shift_net;  // linear output

  std::vector<bool> mask(int dim) const;  // true = passthrough
};

struct CouplingResult {
  Vec out;
  double log_det = 0.0;
};

// Throws kNumeric naming `layer_index` when the predicted scale is not finite.
CouplingResult coupling_forward(const CouplingLayer& layer, const Vec& z, const Vec& cond,
                                int layer_index = 0);
CouplingResult coupling_inverse(const CouplingLayer& layer, const Vec& x, const Vec& cond,
                                int layer_index = 0);

struct FlowSpec {
  int dim = 2;
  int cond_dim = 0;
  int num_layers = 5;
  std::vector<int> hidden = {64, 64};
  bool logit_averaging = false;
  // 0 makes every layer start as the identity map.
  double init_scale = 0.0;
};

struct LogDensity {
  double value = 0.0;
  bool averaged = false;
};

class Flow {
 public:
  static Flow make(const FlowSpec& spec, Rng& rng);

  int dim() const { return dim_; }
  int cond_dim() const { return cond_dim_; }
  bool logit_averaging() const { return logit_averaging_; }
  void set_logit_averaging(bool on) { logit_averaging_ = on; }

  std::vector<CouplingLayer>& layers() { return layers_; }
  const std::vector<CouplingLayer>& layers() const { return layers_; }

  CouplingResult forward(const Vec& z, const Vec& cond) const;
  CouplingResult inverse(const Vec& x, const Vec& cond) const;

  LogDensity logpdf(const Vec& x, const Vec& cond) const;

  // Per-column log p(x | cond), never averaged.
  Vec log_prob(const Mat& x, const Mat& cond) const;
  // Per-column log-density as used for values: divided by dim() when
  // logit averaging is on.
  Vec log_value(const Mat& x, const Mat& cond) const;

  // Mean negative log-likelihood of the batch; accumulates its parameter
  // gradient into `grads` (shaped like *this). `input_grad`, when given,
  // receives d(mean NLL)/dx.
  double nll_and_grad(const Mat& x, const Mat& cond, Flow& grads,
                      Mat* input_grad = nullptr) const;

  Vec sample(const Vec& cond, Rng& rng) const;
  Mat sample(const Mat& cond, Rng& rng) const;

  Flow zeros_like() const;
  std::vector<std::span<double>> params();
  std::vector<std::span<const double>> params() const;

  // Restores a flow from raw parts (checkpoint loading).
  static Flow from_parts(int dim, int cond_dim, bool logit_averaging,
                         std::vector<CouplingLayer> layers);

 private:
  Mat inverse_batch(const Mat& x, const Mat& cond, Vec& log_det) const;

  int dim_ = 0;
  int cond_dim_ = 0;
  bool logit_averaging_ = false;
  std::vector<CouplingLayer> layers_;
};

struct FlowFitStats {
  double nll = 0.0;   // mean NLL before the step
  bool skipped = false;
};

// One Adam step on the mean NLL of (x + N(0, spatial_sigma^2 I)) given cond,
// plus 0.5 * l2 * |params|^2. A non-finite loss or gradient skips the step.
FlowFitStats flow_fit_step(Flow& flow, const Mat& x, const Mat& cond, double spatial_sigma,
                           double l2, AdamState& opt, Rng& rng);

}  // namespace vdl
