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

#include "vdlab/numcore.hpp"

#include <cmath>
#include <numbers>

namespace vdl {

bool all_finite(const Mat& m) { return m.allFinite(); }
bool all_finite(const Vec& v) { return v.allFinite(); }

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double apply(Activation a, double x) {
  switch (a) {
    case Activation::kLinear:
      return x;
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kLeakyRelu:
      return leaky_relu(x);
  }
  return x;
}

// Derivative expressed through pre-activation and activation value.
double derivative(Activation a, double pre, double post) {
  switch (a) {
    case Activation::kLinear:
      return 1.0;
    case Activation::kTanh:
      return 1.0 - post * post;
    case Activation::kLeakyRelu:
      return pre > 0 ? 1.0 : kLeakySlope;
  }
  return 1.0;
}

Activation layer_activation(const Mlp& net, std::size_t l) {
  return l + 1 == net.layers.size() ? net.output : Activation::kLeakyRelu;
}

}  // namespace

Rng::result_type Rng::operator()() {
  const std::uint64_t key = splitmix64(seed_ ^ 0x5851f42d4c957f2dULL);
  return splitmix64(key + 0x9e3779b97f4a7c15ULL * (counter_++));
}

double Rng::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  // Box-Muller without caching the spare value keeps the stream position a
  // pure function of the number of calls.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
  VDL_CONTRACT(n > 0, "Rng::index: empty range");
  // Lemire's multiply-shift; bias is below 2^-64 * n, irrelevant here.
  const unsigned __int128 m =
      static_cast<unsigned __int128>((*this)()) * static_cast<unsigned __int128>(n);
  return static_cast<std::size_t>(m >> 64);
}

Vec Rng::normal_vec(int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = normal();
  return v;
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ * 0xd1b54a32d192ed03ULL + splitmix64(stream + 1)));
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kLinear:
      return "linear";
    case Activation::kTanh:
      return "tanh";
    case Activation::kLeakyRelu:
      return "leaky_relu";
  }
  return "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "tanh") return Activation::kTanh;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + name + "'");
}

Mlp Mlp::make(std::span<const int> sizes, Activation output, Rng& rng,
              double last_layer_scale) {
  VDL_CONTRACT(sizes.size() >= 2, "Mlp::make: need at least input and output sizes");
  Mlp net;
  net.output = output;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    VDL_CONTRACT(in >= 0 && out > 0, "Mlp::make: layer sizes must be positive");
    const double bound = 1.0 / std::sqrt(std::max(in, 1));
    const double scale = (l + 2 == sizes.size()) ? last_layer_scale : 1.0;
    DenseLayer layer{Mat(out, in), Vec(out)};
    for (int c = 0; c < in; ++c)
      for (int r = 0; r < out; ++r) layer.weight(r, c) = scale * rng.uniform(-bound, bound);
    for (int r = 0; r < out; ++r) layer.bias[r] = scale * rng.uniform(-bound, bound);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

int Mlp::in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
int Mlp::out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Vec Mlp::forward(const Vec& x) const {
  Mat m = forward(Mat(x));
  return m.col(0);
}

Mat Mlp::forward(const Mat& x) const {
  VDL_CONTRACT(x.rows() == in_dim(), "Mlp::forward: input dimension " +
                                         std::to_string(x.rows()) + " != " +
                                         std::to_string(in_dim()));
  Mat h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Mat pre = layers[l].weight * h;
    pre.colwise() += layers[l].bias;
    const Activation act = layer_activation(*this, l);
    if (act != Activation::kLinear) pre = pre.unaryExpr([act](double v) { return apply(act, v); });
    h = std::move(pre);
  }
  return h;
}

const Mat& Mlp::forward(const Mat& x, Tape& tape) const {
  VDL_CONTRACT(x.rows() == in_dim(), "Mlp::forward: input dimension " +
                                         std::to_string(x.rows()) + " != " +
                                         std::to_string(in_dim()));
  tape.inputs.resize(layers.size());
  tape.pre.resize(layers.size());
  tape.inputs[0] = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    tape.pre[l] = layers[l].weight * tape.inputs[l];
    tape.pre[l].colwise() += layers[l].bias;
    const Activation act = layer_activation(*this, l);
    // inputs[l + 1] doubles as the post-activation of layer l.
    Mat& post = (l + 1 < layers.size()) ? tape.inputs[l + 1] : tape.out;
    if (act == Activation::kLinear)
      post = tape.pre[l];
    else
      post = tape.pre[l].unaryExpr([act](double v) { return apply(act, v); });
  }
  return tape.out;
}

Mat Mlp::backward(const Tape& tape, const Mat& upstream, Mlp* grads) const {
  VDL_CONTRACT(upstream.rows() == out_dim() && upstream.cols() == tape.out.cols(),
               "Mlp::backward: upstream gradient shape does not match output");
  if (grads) check_shapes_match(*this, *grads);
  Mat g = upstream;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Activation act = layer_activation(*this, l);
    if (act != Activation::kLinear) {
      const Mat& post = (l + 1 < layers.size()) ? tape.inputs[l + 1] : tape.out;
      const Mat& pre = tape.pre[l];
      for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r)
          g(r, c) *= derivative(act, pre(r, c), post(r, c));
    }
    if (grads) {
      grads->layers[l].weight.noalias() += g * tape.inputs[l].transpose();
      grads->layers[l].bias += g.rowwise().sum();
    }
    g = layers[l].weight.transpose() * g;
  }
  return g;
}

Mlp Mlp::zeros_like() const {
  Mlp z = *this;
  z.set_zero();
  return z;
}

void Mlp::set_zero() {
  for (auto& l : layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
}

std::vector<std::span<double>> Mlp::params() {
  std::vector<std::span<double>> out;
  for (auto& l : layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

std::vector<std::span<const double>> Mlp::params() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

void check_shapes_match(const Mlp& a, const Mlp& b) {
  VDL_CONTRACT(a.layers.size() == b.layers.size(), "network depth mismatch");
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    VDL_CONTRACT(a.layers[l].weight.rows() == b.layers[l].weight.rows() &&
                     a.layers[l].weight.cols() == b.layers[l].weight.cols() &&
                     a.layers[l].bias.size() == b.layers[l].bias.size(),
                 "network layer shape mismatch at layer " + std::to_string(l));
  }
}

Vec mlp_forward(const Mlp& params, const Vec& input) { return params.forward(input); }

MlpGrad mlp_backward(const Mlp& params, const Vec& input, const Vec& upstream) {
  VDL_CONTRACT(upstream.size() == params.out_dim(),
               "mlp_backward: upstream gradient dimension mismatch");
  Mlp::Tape tape;
  params.forward(Mat(input), tape);
  MlpGrad out{Vec(), params.zeros_like()};
  out.input_grad = params.backward(tape, Mat(upstream), &out.param_grads).col(0);
  return out;
}

AdamState AdamState::for_params(const std::vector<std::span<double>>& params,
                                double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& p : params) {
    s.m.emplace_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
    s.v.emplace_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
  }
  return s;
}

void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state) {
  VDL_CONTRACT(params.size() == grads.size() && params.size() == state.m.size(),
               "adam_step: parameter/gradient/moment tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    VDL_CONTRACT(params[i].size() == grads[i].size() &&
                     params[i].size() == static_cast<std::size_t>(state.m[i].size()),
                 "adam_step: tensor " + std::to_string(i) + " shape mismatch");
    for (double g : grads[i])
      VDL_REQUIRE(std::isfinite(g), ErrorCode::kNumeric,
                  "adam_step: non-finite gradient in tensor " + std::to_string(i));
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Vec& m = state.m[i];
    Vec& v = state.v[i];
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      const double g = grads[i][k];
      const auto kk = static_cast<Eigen::Index>(k);
      m[kk] = state.beta1 * m[kk] + (1.0 - state.beta1) * g;
      v[kk] = state.beta2 * v[kk] + (1.0 - state.beta2) * g * g;
      const double mhat = m[kk] / c1;
      const double vhat = v[kk] / c2;
      params[i][k] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

void adam_step(Mlp& params, const Mlp& grads, AdamState& state) {
  check_shapes_match(params, grads);
  adam_step(params.params(), grads.params(), state);
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double eps) {
  Vec g(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

Mat vstack(std::initializer_list<const Mat*> blocks) {
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  for (const Mat* b : blocks) {
    rows += b->rows();
    if (cols < 0) cols = b->cols();
    VDL_CONTRACT(b->cols() == cols, "vstack: column count mismatch");
  }
  Mat out(rows, std::max<Eigen::Index>(cols, 0));
  Eigen::Index r = 0;
  for (const Mat* b : blocks) {
    out.middleRows(r, b->rows()) = *b;
    r += b->rows();
  }
  return out;
}

Vec concat(std::initializer_list<const Vec*> parts) {
  Eigen::Index n = 0;
  for (const Vec* p : parts) n += p->size();
  Vec out(n);
  Eigen::Index i = 0;
  for (const Vec* p : parts) {
    out.segment(i, p->size()) = *p;
    i += p->size();
  }
  return out;
}

}  // namespace vdl
