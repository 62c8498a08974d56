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

#include "vdlab/flows.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

namespace vdl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

Mat gather_rows(const Mat& m, const std::vector<int>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

Mat net_input(const Mat& y, const CouplingLayer& layer, const Mat& cond) {
  Mat pass = gather_rows(y, layer.passthrough);
  if (cond.rows() == 0) return pass;
  return vstack({&pass, &cond});
}

struct LayerPass {
  Mat out;
  Vec log_det;  // per column
};

LayerPass apply_layer(const CouplingLayer& layer, const Mat& y, const Mat& cond, bool inverse,
                      int layer_index) {
  const Mat inp = net_input(y, layer, cond);
  const Mat a = layer.scale_net.forward(inp);
  const Mat t = layer.shift_net.forward(inp);
  VDL_REQUIRE(a.allFinite() && t.allFinite(), ErrorCode::kNumeric,
              "coupling layer " + std::to_string(layer_index) + ": non-finite scale or shift");
  LayerPass r{y, a.colwise().sum().transpose()};
  for (std::size_t i = 0; i < layer.transformed.size(); ++i) {
    const int q = layer.transformed[i];
    const auto ii = static_cast<Eigen::Index>(i);
    if (inverse)
      r.out.row(q) = (y.row(q) - t.row(ii)).cwiseProduct((-a.row(ii)).array().exp().matrix());
    else
      r.out.row(q) = y.row(q).cwiseProduct(a.row(ii).array().exp().matrix()) + t.row(ii);
  }
  if (inverse) r.log_det = -r.log_det;
  return r;
}

Mat as_column(const Vec& v) { return Mat(v); }

std::vector<int> complement(const std::vector<int>& idx, int dim) {
  std::vector<int> out;
  for (int d = 0; d < dim; ++d)
    if (std::find(idx.begin(), idx.end(), d) == idx.end()) out.push_back(d);
  return out;
}

}  // namespace

std::vector<bool> CouplingLayer::mask(int dim) const {
  std::vector<bool> m(static_cast<std::size_t>(dim), false);
  for (int p : passthrough) m[static_cast<std::size_t>(p)] = true;
  return m;
}

CouplingResult coupling_forward(const CouplingLayer& layer, const Vec& z, const Vec& cond,
                                int layer_index) {
  LayerPass p = apply_layer(layer, as_column(z), as_column(cond), false, layer_index);
  return {p.out.col(0), p.log_det[0]};
}

CouplingResult coupling_inverse(const CouplingLayer& layer, const Vec& x, const Vec& cond,
                                int layer_index) {
  LayerPass p = apply_layer(layer, as_column(x), as_column(cond), true, layer_index);
  return {p.out.col(0), p.log_det[0]};
}

Flow Flow::make(const FlowSpec& spec, Rng& rng) {
  VDL_CONTRACT(spec.dim >= 2, "Flow: modeled dimension must be at least 2");
  VDL_CONTRACT(spec.cond_dim >= 0, "Flow: negative conditioning dimension");
  VDL_CONTRACT(spec.num_layers >= 0, "Flow: negative layer count");
  Flow f;
  f.dim_ = spec.dim;
  f.cond_dim_ = spec.cond_dim;
  f.logit_averaging_ = spec.logit_averaging;
  std::vector<int> prev;
  for (int k = 0; k < spec.num_layers; ++k) {
    CouplingLayer layer;
    if (k % 2 == 0) {
      // Fresh random balanced split; the next layer uses its complement so
      // every coordinate is transformed within each pair.
      std::vector<int> perm(static_cast<std::size_t>(spec.dim));
      for (int d = 0; d < spec.dim; ++d) perm[static_cast<std::size_t>(d)] = d;
      for (int d = spec.dim - 1; d > 0; --d)
        std::swap(perm[static_cast<std::size_t>(d)],
                  perm[rng.index(static_cast<std::size_t>(d) + 1)]);
      const int n_pass = spec.dim % 2 == 0 ? spec.dim / 2 : spec.dim / 2 + static_cast<int>(rng.index(2));
      layer.passthrough.assign(perm.begin(), perm.begin() + n_pass);
      std::sort(layer.passthrough.begin(), layer.passthrough.end());
      if (layer.passthrough == prev) {
        // Consecutive layers must differ; swap to the complement.
        layer.passthrough = complement(layer.passthrough, spec.dim);
      }
    } else {
      layer.passthrough = complement(prev, spec.dim);
    }
    layer.transformed = complement(layer.passthrough, spec.dim);
    prev = layer.passthrough;

    std::vector<int> sizes{static_cast<int>(layer.passthrough.size()) + spec.cond_dim};
    sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
    sizes.push_back(static_cast<int>(layer.transformed.size()));
    layer.scale_net = Mlp::make(sizes, Activation::kTanh, rng, spec.init_scale);
    layer.shift_net = Mlp::make(sizes, Activation::kLinear, rng, spec.init_scale);
    f.layers_.push_back(std::move(layer));
  }
  return f;
}

Flow Flow::from_parts(int dim, int cond_dim, bool logit_averaging,
                      std::vector<CouplingLayer> layers) {
  Flow f;
  f.dim_ = dim;
  f.cond_dim_ = cond_dim;
  f.logit_averaging_ = logit_averaging;
  f.layers_ = std::move(layers);
  for (const auto& l : f.layers_) {
    VDL_CONTRACT(!l.passthrough.empty() && !l.transformed.empty() &&
                     static_cast<int>(l.passthrough.size() + l.transformed.size()) == dim,
                 "Flow: coupling mask must split the modeled dimensions");
    VDL_CONTRACT(l.scale_net.in_dim() == static_cast<int>(l.passthrough.size()) + cond_dim &&
                     l.scale_net.out_dim() == static_cast<int>(l.transformed.size()),
                 "Flow: scale network shape does not match mask");
    check_shapes_match(l.scale_net, l.shift_net);
  }
  return f;
}

CouplingResult Flow::forward(const Vec& z, const Vec& cond) const {
  VDL_CONTRACT(z.size() == dim_ && cond.size() == cond_dim_, "Flow::forward: dimension mismatch");
  CouplingResult r{z, 0.0};
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    CouplingResult step = coupling_forward(layers_[k], r.out, cond, static_cast<int>(k));
    r.out = std::move(step.out);
    r.log_det += step.log_det;
  }
  return r;
}

CouplingResult Flow::inverse(const Vec& x, const Vec& cond) const {
  VDL_CONTRACT(x.size() == dim_ && cond.size() == cond_dim_, "Flow::inverse: dimension mismatch");
  CouplingResult r{x, 0.0};
  for (std::size_t k = layers_.size(); k-- > 0;) {
    CouplingResult step = coupling_inverse(layers_[k], r.out, cond, static_cast<int>(k));
    r.out = std::move(step.out);
    r.log_det += step.log_det;
  }
  return r;
}

Mat Flow::inverse_batch(const Mat& x, const Mat& cond, Vec& log_det) const {
  VDL_CONTRACT(x.rows() == dim_ && cond.rows() == cond_dim_ && cond.cols() == x.cols(),
               "Flow: batch dimension mismatch");
  log_det = Vec::Zero(x.cols());
  Mat y = x;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    LayerPass p = apply_layer(layers_[k], y, cond, true, static_cast<int>(k));
    y = std::move(p.out);
    log_det += p.log_det;
  }
  return y;
}

Vec Flow::log_prob(const Mat& x, const Mat& cond) const {
  Vec log_det;
  const Mat z = inverse_batch(x, cond, log_det);
  Vec lp = -0.5 * z.colwise().squaredNorm().transpose();
  lp.array() += -kHalfLog2Pi * dim_;
  lp += log_det;
  VDL_REQUIRE(lp.allFinite(), ErrorCode::kNumeric, "Flow::log_prob: non-finite log-density");
  return lp;
}

Vec Flow::log_value(const Mat& x, const Mat& cond) const {
  Vec lp = log_prob(x, cond);
  if (logit_averaging_) lp /= static_cast<double>(dim_);
  return lp;
}

LogDensity Flow::logpdf(const Vec& x, const Vec& cond) const {
  VDL_CONTRACT(x.size() == dim_ && cond.size() == cond_dim_, "Flow::logpdf: dimension mismatch");
  const Vec v = log_value(as_column(x), as_column(cond));
  return {v[0], logit_averaging_};
}

double Flow::nll_and_grad(const Mat& x, const Mat& cond, Flow& grads, Mat* input_grad) const {
  VDL_CONTRACT(x.rows() == dim_ && cond.rows() == cond_dim_ && cond.cols() == x.cols() &&
                   x.cols() > 0,
               "Flow::nll_and_grad: batch dimension mismatch");
  VDL_CONTRACT(grads.layers_.size() == layers_.size(), "Flow::nll_and_grad: gradient shape mismatch");
  const auto n_layers = layers_.size();
  const double inv_b = 1.0 / static_cast<double>(x.cols());

  struct Cache {
    Mat inp;
    Mlp::Tape scale_tape, shift_tape;
    Mat z_q;   // transformed coordinates after the inverse step
    Mat e;     // exp(-a)
  };
  std::vector<Cache> caches(n_layers);

  // Inverse pass, x -> z, from the last layer down to the first.
  Mat y = x;
  double sum_a = 0.0;
  for (std::size_t k = n_layers; k-- > 0;) {
    const CouplingLayer& layer = layers_[k];
    Cache& c = caches[k];
    c.inp = net_input(y, layer, cond);
    const Mat& a = layer.scale_net.forward(c.inp, c.scale_tape);
    const Mat& t = layer.shift_net.forward(c.inp, c.shift_tape);
    VDL_REQUIRE(a.allFinite() && t.allFinite(), ErrorCode::kNumeric,
                "coupling layer " + std::to_string(k) + ": non-finite scale or shift");
    c.e = (-a).array().exp().matrix();
    c.z_q.resize(static_cast<Eigen::Index>(layer.transformed.size()), x.cols());
    for (std::size_t i = 0; i < layer.transformed.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      c.z_q.row(ii) = (y.row(layer.transformed[i]) - t.row(ii)).cwiseProduct(c.e.row(ii));
    }
    for (std::size_t i = 0; i < layer.transformed.size(); ++i)
      y.row(layer.transformed[i]) = c.z_q.row(static_cast<Eigen::Index>(i));
    sum_a += a.sum();
  }
  const Mat& z = y;
  const double nll =
      inv_b * (0.5 * z.squaredNorm() + sum_a) + kHalfLog2Pi * dim_;
  VDL_REQUIRE(std::isfinite(nll), ErrorCode::kNumeric, "Flow::nll_and_grad: non-finite loss");

  // Reverse: gradient w.r.t. the latent, then back through layers 0..K-1.
  Mat g = inv_b * z;
  for (std::size_t k = 0; k < n_layers; ++k) {
    const CouplingLayer& layer = layers_[k];
    Cache& c = caches[k];
    const auto nq = static_cast<Eigen::Index>(layer.transformed.size());
    Mat gz_q(nq, x.cols());
    for (Eigen::Index i = 0; i < nq; ++i) gz_q.row(i) = g.row(layer.transformed[static_cast<std::size_t>(i)]);
    const Mat gt = -gz_q.cwiseProduct(c.e);
    Mat ga = -gz_q.cwiseProduct(c.z_q);
    ga.array() += inv_b;
    Mat g_inp = layer.scale_net.backward(c.scale_tape, ga, &grads.layers_[k].scale_net);
    g_inp += layer.shift_net.backward(c.shift_tape, gt, &grads.layers_[k].shift_net);
    for (Eigen::Index i = 0; i < nq; ++i)
      g.row(layer.transformed[static_cast<std::size_t>(i)]) = gz_q.row(i).cwiseProduct(c.e.row(i));
    for (std::size_t i = 0; i < layer.passthrough.size(); ++i)
      g.row(layer.passthrough[i]) += g_inp.row(static_cast<Eigen::Index>(i));
  }
  if (input_grad) *input_grad = g;
  return nll;
}

Vec Flow::sample(const Vec& cond, Rng& rng) const {
  return forward(rng.normal_vec(dim_), cond).out;
}

Mat Flow::sample(const Mat& cond, Rng& rng) const {
  VDL_CONTRACT(cond.rows() == cond_dim_, "Flow::sample: conditioning dimension mismatch");
  Mat y(dim_, cond.cols());
  for (Eigen::Index c = 0; c < cond.cols(); ++c)
    for (int d = 0; d < dim_; ++d) y(d, c) = rng.normal();
  for (std::size_t k = 0; k < layers_.size(); ++k)
    y = apply_layer(layers_[k], y, cond, false, static_cast<int>(k)).out;
  return y;
}

Flow Flow::zeros_like() const {
  Flow f = *this;
  for (auto& l : f.layers_) {
    l.scale_net.set_zero();
    l.shift_net.set_zero();
  }
  return f;
}

std::vector<std::span<double>> Flow::params() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    for (auto s : l.scale_net.params()) out.push_back(s);
    for (auto s : l.shift_net.params()) out.push_back(s);
  }
  return out;
}

std::vector<std::span<const double>> Flow::params() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers_) {
    for (auto s : l.scale_net.params()) out.push_back(s);
    for (auto s : l.shift_net.params()) out.push_back(s);
  }
  return out;
}

FlowFitStats flow_fit_step(Flow& flow, const Mat& x, const Mat& cond, double spatial_sigma,
                           double l2, AdamState& opt, Rng& rng) {
  VDL_CONTRACT(x.cols() > 0, "flow_fit_step: empty batch");
  Mat noisy = x;
  if (spatial_sigma > 0.0)
    for (Eigen::Index c = 0; c < noisy.cols(); ++c)
      for (Eigen::Index r = 0; r < noisy.rows(); ++r) noisy(r, c) += spatial_sigma * rng.normal();
  Flow grads = flow.zeros_like();
  FlowFitStats stats;
  try {
    stats.nll = flow.nll_and_grad(noisy, cond, grads);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNumeric) throw;
    stats.skipped = true;
    stats.nll = std::numeric_limits<double>::quiet_NaN();
    return stats;
  }
  if (l2 > 0.0) {
    auto g = grads.params();
    const auto p = std::as_const(flow).params();
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g[i].size(); ++j) g[i][j] += l2 * p[i][j];
  }
  try {
    adam_step(flow.params(), std::as_const(grads).params(), opt);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNumeric) throw;
    stats.skipped = true;
  }
  return stats;
}

}  // namespace vdl
