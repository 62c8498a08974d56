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

// Dense numerics shared by every learned component: vectors/matrices, a
// counter-based RNG, small feed-forward networks with exact reverse-mode
// gradients, and Adam.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vdl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode : int {
  kInvalidArgument = 1,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
  kInternal = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

#define VDL_REQUIRE(cond, code, msg)                      \
  do {                                                    \
    if (!(cond)) throw ::vdl::Error((code), (msg));       \
  } while (0)

#define VDL_CONTRACT(cond, msg) \
  VDL_REQUIRE(cond, ::vdl::ErrorCode::kInvalidArgument, msg)

bool all_finite(const Mat& m);
bool all_finite(const Vec& v);

// Counter-based generator: output i is a splitmix64 finalisation of
// (seed, i). Same seed and call sequence give the same stream on any platform.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  std::size_t index(std::size_t n);  // uniform in [0, n)
  Vec normal_vec(int n);

  // Independent stream derived from this generator's seed.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

enum class Activation { kLinear, kTanh, kLeakyRelu };

inline constexpr double kLeakySlope = 0.01;

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
};

// Feed-forward network: leaky-relu on hidden layers, `output` on the last.
// Batched calls take one sample per column.
struct Mlp {
  std::vector<DenseLayer> layers;
  Activation output = Activation::kLinear;

  // Hidden weights use a scaled uniform init; the last layer's weights are
  // multiplied by `last_layer_scale` (0 gives a constant-output network).
  static Mlp make(std::span<const int> sizes, Activation output, Rng& rng,
                  double last_layer_scale = 1.0);

  int in_dim() const;
  int out_dim() const;
  std::size_t num_params() const;

  Vec forward(const Vec& x) const;
  Mat forward(const Mat& x) const;

  // Cached activations of one batched forward pass.
  struct Tape {
    std::vector<Mat> inputs;  // input to each layer
    std::vector<Mat> pre;     // pre-activation of each layer
    Mat out;
  };
  const Mat& forward(const Mat& x, Tape& tape) const;

  // Reverse pass for a tape. Parameter gradients are accumulated into
  // `grads` (same shape as *this) when non-null; returns d(loss)/d(input).
  Mat backward(const Tape& tape, const Mat& upstream, Mlp* grads) const;

  Mlp zeros_like() const;
  void set_zero();
  std::vector<std::span<double>> params();
  std::vector<std::span<const double>> params() const;
};

void check_shapes_match(const Mlp& a, const Mlp& b);

// Single-sample helpers.
struct MlpGrad {
  Vec input_grad;
  Mlp param_grads;
};
Vec mlp_forward(const Mlp& params, const Vec& input);
MlpGrad mlp_backward(const Mlp& params, const Vec& input, const Vec& upstream);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Vec> m;
  std::vector<Vec> v;

  static AdamState for_params(const std::vector<std::span<double>>& params,
                              double learning_rate);
};

// One bias-corrected Adam update. Throws kNumeric (state untouched) when any
// gradient entry is non-finite.
void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads,
               AdamState& state);

// Convenience for whole networks.
void adam_step(Mlp& params, const Mlp& grads, AdamState& state);

// Central differences.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                     double eps = 1e-6);

inline double leaky_relu(double x) { return x > 0 ? x : kLeakySlope * x; }

// Concatenate column blocks (rows stacked).
Mat vstack(std::initializer_list<const Mat*> blocks);
Vec concat(std::initializer_list<const Vec*> parts);

}  // namespace vdl
