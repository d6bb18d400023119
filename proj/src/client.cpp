// Copyright 2026 The fedqssl Authors. All Rights Reserved.
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

#include "fedq/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedq/error.hpp"
#include "fedq/sslcore.hpp"

namespace fedq::client {
namespace {

using quant::CodebookPtr;
using quant::OnDegenerate;
using quant::QuantizedTensor;

QuantizedTensor quantize_tanh(const Matrix& x, int rate, Rng& rng) {
  auto cb = std::make_shared<const quant::Codebook>(
      quant::build_tanh_codebook(quant::elements(x), rate, OnDegenerate::kCollapse));
  return quant::stochastic_quantize(x, std::move(cb), rng);
}

QuantizedTensor quantize_quantile(const Matrix& x, int rate, Rng& rng) {
  auto cb = std::make_shared<const quant::Codebook>(
      quant::build_quantile_codebook(quant::elements(x), rate, OnDegenerate::kCollapse));
  return quant::stochastic_quantize(x, std::move(cb), rng);
}

Matrix activate(const Matrix& z, Activation h) {
  if (h == Activation::kIdentity) return z;
  return z.cwiseMax(0.0);
}

// h'(z) applied elementwise to g.
Matrix apply_derivative(const Matrix& g, const Matrix& z, Activation h) {
  if (h == Activation::kIdentity) return g;
  return (z.array() > 0.0).select(g, 0.0);
}

void check_chain(std::span<const Matrix> weights, Eigen::Index input_cols) {
  if (weights.empty()) raise(ErrorCode::kDimensionMismatch, "model has no layers");
  Eigen::Index width = input_cols;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].cols() != width) {
      raise(ErrorCode::kDimensionMismatch,
            "layer " + std::to_string(l + 1) + " expects " + std::to_string(weights[l].cols()) +
                " inputs, got " + std::to_string(width));
    }
    width = weights[l].rows();
  }
}

}  // namespace

double LrSchedule::at(long t) const {
  if (kind == Kind::kConstant) return base;
  return base / std::sqrt(static_cast<double>(t) + 1.0);
}

const quant::QuantizedTensor& LayerWeights::quantized() const {
  if (!is_quantized()) raise(ErrorCode::kStateMismatch, "layer is not quantized");
  return std::get<QuantizedTensor>(store_);
}

Matrix LayerWeights::dense() const {
  if (is_quantized()) return quant::dequantize(std::get<QuantizedTensor>(store_));
  return std::get<Matrix>(store_);
}

Eigen::Index LayerWeights::rows() const {
  if (is_quantized()) return static_cast<Eigen::Index>(std::get<QuantizedTensor>(store_).rows());
  return std::get<Matrix>(store_).rows();
}

Eigen::Index LayerWeights::cols() const {
  if (is_quantized()) return static_cast<Eigen::Index>(std::get<QuantizedTensor>(store_).cols());
  return std::get<Matrix>(store_).cols();
}

double QuantErrorStats::mean_grad_error() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& st : steps) s += st.grad_error;
  return s / static_cast<double>(steps.size());
}

double QuantErrorStats::mean_weight_error() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& st : steps) s += st.weight_error;
  return s / static_cast<double>(steps.size());
}

double QuantErrorStats::mean_grad_norm_sq() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& st : steps) s += st.grad_norm_sq;
  return s / static_cast<double>(steps.size());
}

double QuantErrorStats::max_grad_norm() const {
  double m = 0.0;
  for (const auto& st : steps) m = std::max(m, st.grad_norm_sq);
  return std::sqrt(m);
}

void QuantErrorStats::append(const QuantErrorStats& other) {
  steps.insert(steps.end(), other.steps.begin(), other.steps.end());
}

std::vector<Matrix> ClientState::dense_model() const {
  std::vector<Matrix> out;
  out.reserve(model.size());
  for (const auto& layer : model) out.push_back(layer.dense());
  return out;
}

std::vector<quant::QuantizedTensor> ClientState::quantized_model() const {
  std::vector<QuantizedTensor> out;
  out.reserve(model.size());
  for (const auto& layer : model) out.push_back(layer.quantized());
  return out;
}

ClientState make_client(int client_id, const TrainingOptions& options,
                        std::span<const Matrix> init, std::uint64_t seed) {
  if (options.bitwidth < 1 || options.grad_bitwidth() > quant::kMaxRate) {
    raise(ErrorCode::kInvalidArgument, "bitwidth out of range");
  }
  if (init.empty()) raise(ErrorCode::kInvalidArgument, "model has no layers");
  ClientState state;
  state.client_id = client_id;
  state.options = options;
  state.rng = Rng(seed);
  for (const auto& w : init) {
    if (options.quantize) {
      state.model.emplace_back(quantize_tanh(w, options.bitwidth, state.rng));
    } else {
      state.model.emplace_back(w);
    }
  }
  return state;
}

void assign_model(ClientState& state, std::vector<quant::QuantizedTensor> model) {
  if (model.size() != state.model.size()) {
    raise(ErrorCode::kShapeMismatch, "layer count differs from the client model");
  }
  for (std::size_t l = 0; l < model.size(); ++l) {
    if (static_cast<Eigen::Index>(model[l].rows()) != state.model[l].rows() ||
        static_cast<Eigen::Index>(model[l].cols()) != state.model[l].cols()) {
      raise(ErrorCode::kShapeMismatch, "layer " + std::to_string(l + 1) + " shape differs");
    }
    if (state.options.quantize && model[l].rate() != state.options.bitwidth) {
      raise(ErrorCode::kInvalidArgument, "received layer at the wrong bitwidth");
    }
  }
  for (std::size_t l = 0; l < model.size(); ++l) {
    if (state.options.quantize) {
      state.model[l] = LayerWeights(std::move(model[l]));
    } else {
      state.model[l] = LayerWeights(quant::dequantize(model[l]));
    }
  }
}

ForwardState quantized_forward(std::span<const Matrix> weights, const Matrix& batch,
                               const ForwardOptions& options, Rng& rng) {
  check_chain(weights, batch.cols());
  ForwardState fs;
  fs.input = batch;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Matrix z = fs.layer_input(l) * weights[l].transpose();
    Matrix a = activate(z, options.activation);
    Matrix aq = options.quantize_activations
                    ? quant::dequantize(quantize_tanh(a, options.bitwidth, rng))
                    : a;
    fs.pre_activations.push_back(std::move(z));
    fs.activations.push_back(std::move(a));
    fs.quantized_activations.push_back(std::move(aq));
  }
  return fs;
}

BackwardResult quantized_backward(std::span<const Matrix> weights, const ForwardState& forward,
                                  const Matrix& upstream, std::span<const Matrix> direct_grads,
                                  const BackwardOptions& options, Rng& rng) {
  const std::size_t L = weights.size();
  if (forward.pre_activations.size() != L || L == 0) {
    raise(ErrorCode::kStateMismatch, "forward state has a different layer count");
  }
  if (upstream.rows() != forward.output().rows() || upstream.cols() != forward.output().cols()) {
    raise(ErrorCode::kStateMismatch, "upstream gradient shape differs from the forward output");
  }
  if (!direct_grads.empty() && direct_grads.size() != L) {
    raise(ErrorCode::kStateMismatch, "direct gradient count differs from the layer count");
  }

  BackwardResult out;
  out.weight_grads.resize(L);
  out.applied_grads.resize(L);
  if (options.quantize) out.quantized.reserve(L);
  std::vector<QuantizedTensor> rev;

  Matrix g_a = options.quantize
                   ? quant::dequantize(quantize_quantile(upstream, options.grad_bitwidth, rng))
                   : upstream;
  for (std::size_t i = L; i-- > 0;) {
    const Matrix g_z = apply_derivative(g_a, forward.pre_activations[i], options.activation);
    Matrix g_w = g_z.transpose() * forward.layer_input(i);
    if (!direct_grads.empty()) g_w += direct_grads[i];
    if (g_w.rows() != weights[i].rows() || g_w.cols() != weights[i].cols()) {
      raise(ErrorCode::kStateMismatch, "forward state does not match the weights");
    }
    out.grad_norm_sq += g_w.squaredNorm();
    if (options.quantize) {
      QuantizedTensor q = quantize_quantile(g_w, options.grad_bitwidth, rng);
      out.applied_grads[i] = quant::dequantize(q);
      out.grad_error += (g_w - out.applied_grads[i]).squaredNorm();
      rev.push_back(std::move(q));
    } else {
      out.applied_grads[i] = g_w;
    }
    out.weight_grads[i] = std::move(g_w);
    if (i > 0) {
      Matrix g_prev = g_z * weights[i];
      g_a = options.quantize
                ? quant::dequantize(quantize_quantile(g_prev, options.grad_bitwidth, rng))
                : std::move(g_prev);
    }
  }
  for (auto it = rev.rbegin(); it != rev.rend(); ++it) out.quantized.push_back(std::move(*it));
  return out;
}

Matrix effective_map(std::span<const Matrix> weights) {
  if (weights.empty()) raise(ErrorCode::kDimensionMismatch, "model has no layers");
  Matrix p = weights[0];
  for (std::size_t l = 1; l < weights.size(); ++l) p = weights[l] * p;
  return p;
}

std::vector<Matrix> regularizer_grads(std::span<const Matrix> weights) {
  const std::size_t L = weights.size();
  const Matrix p = effective_map(weights);
  // d/dP of 1/2 ||P^T P||^2 is 2 P P^T P.
  const Matrix dp = 2.0 * p * (p.transpose() * p);
  std::vector<Matrix> out(L);
  for (std::size_t l = 0; l < L; ++l) {
    // P = A W_l B with A = W_L..W_{l+1}, B = W_{l-1}..W_1.
    Matrix left = dp;
    for (std::size_t j = L; j-- > l + 1;) left = weights[j].transpose() * left;
    Matrix g = left;
    if (l > 0) {
      Matrix b = weights[0];
      for (std::size_t j = 1; j < l; ++j) b = weights[j] * b;
      g = left * b.transpose();
    }
    out[l] = std::move(g);
  }
  return out;
}

double local_update(ClientState& state, std::span<const Matrix> grads, double alpha,
                    double* update_norm_sq) {
  if (grads.size() != state.model.size()) {
    raise(ErrorCode::kShapeMismatch, "gradient count differs from the layer count");
  }
  double err = 0.0;
  double unorm = 0.0;
  std::vector<LayerWeights> next;
  next.reserve(state.model.size());
  for (std::size_t l = 0; l < state.model.size(); ++l) {
    const Matrix w = state.model[l].dense();
    if (grads[l].rows() != w.rows() || grads[l].cols() != w.cols()) {
      raise(ErrorCode::kShapeMismatch, "gradient shape differs for layer " + std::to_string(l + 1));
    }
    Matrix u = w - alpha * grads[l];
    unorm += u.squaredNorm();
    if (state.options.quantize) {
      QuantizedTensor q = quantize_tanh(u, state.options.bitwidth, state.rng);
      err += (u - quant::dequantize(q)).squaredNorm();
      next.emplace_back(std::move(q));
    } else {
      next.emplace_back(std::move(u));
    }
  }
  state.model = std::move(next);
  ++state.epoch_counter;
  if (update_norm_sq) *update_norm_sq = unorm;
  return err;
}

namespace {

Matrix next_batch(ClientState& state, const data::DataShard& shard) {
  const auto n = static_cast<std::size_t>(shard.samples.rows());
  if (n == 0) raise(ErrorCode::kEmptyInput, "empty shard");
  const int b = state.options.batch_size;
  if (b <= 0 || static_cast<std::size_t>(b) >= n) return shard.samples;
  const auto bs = static_cast<std::size_t>(b);
  if (state.batch_order.size() != n || state.batch_cursor + bs > n) {
    state.batch_order.resize(n);
    std::iota(state.batch_order.begin(), state.batch_order.end(), 0u);
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(state.rng.below(i + 1));
      std::swap(state.batch_order[i], state.batch_order[j]);
    }
    state.batch_cursor = 0;
  }
  Matrix batch(b, shard.samples.cols());
  for (std::size_t i = 0; i < bs; ++i) {
    batch.row(static_cast<Eigen::Index>(i)) =
        shard.samples.row(state.batch_order[state.batch_cursor + i]);
  }
  state.batch_cursor += bs;
  return batch;
}

}  // namespace

BackwardResult step_gradients(ClientState& state, const data::DataShard& shard) {
  const TrainingOptions& opt = state.options;
  const Matrix batch = next_batch(state, shard);
  const std::vector<Matrix> w = state.dense_model();

  ForwardOptions fo;
  fo.activation = opt.activation;
  fo.quantize_activations = opt.quantize && opt.quantize_activations;
  fo.bitwidth = opt.bitwidth;
  const ForwardState fs = quantized_forward(w, batch, fo, state.rng);

  const Matrix upstream = ssl::contrastive_activation_grad(fs.output(), opt.aug_sigma, state.rng);
  const std::vector<Matrix> reg = regularizer_grads(w);

  BackwardOptions bo;
  bo.activation = opt.activation;
  bo.quantize = opt.quantize;
  bo.grad_bitwidth = opt.grad_bitwidth();
  return quantized_backward(w, fs, upstream, reg, bo, state.rng);
}

StepStats train_step(ClientState& state, const data::DataShard& shard) {
  const LrSchedule& lr = state.options.lr;
  const double alpha =
      lr.at(lr.constant_within_round ? static_cast<long>(state.round) : state.epoch_counter);
  const BackwardResult br = step_gradients(state, shard);

  StepStats st;
  st.epoch = state.epoch_counter;
  st.round = state.round;
  st.alpha = alpha;
  st.grad_error = br.grad_error;
  st.grad_norm_sq = br.grad_norm_sq;
  st.weight_error = local_update(state, br.applied_grads, alpha, &st.weight_norm_sq);
  return st;
}

QuantErrorStats run_local_epochs(ClientState& state, const data::DataShard& shard, int epochs) {
  if (epochs < 1) raise(ErrorCode::kInvalidArgument, "local epochs must be >= 1");
  QuantErrorStats stats;
  stats.steps.reserve(static_cast<std::size_t>(epochs));
  for (int e = 0; e < epochs; ++e) stats.steps.push_back(train_step(state, shard));
  ++state.round;
  return stats;
}

}  // namespace fedq::client
