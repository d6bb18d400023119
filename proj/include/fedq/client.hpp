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

// Low-bitwidth local training on one client.
//
// The encoder is a stack of fully-connected layers W_1..W_L (W_l is
// out_l x in_l, no bias) with activation h. One local epoch is one step:
//
//   forward:  a~_l = a^Q_{l-1} W_l^T,  a_l = h(a~_l),  a^Q_l = Q_tanh(a_l)
//   backward: g^Q_{a_L} = Q_quantile(g_{a_L}); for l = L..1
//             g_{W_l} = (g^Q_{a_l} * h'(a~_l))^T a^Q_{l-1}  -> Q_quantile
//             g_{a_{l-1}} = (g^Q_{a_l} * h'(a~_l)) W_l         -> Q_quantile
//   update:   W^Q_l <- Q_tanh(W^Q_l - alpha g^Q_{W_l})
//
// Weights and activations use s_k bits; gradients use s_k + grad_extra_bits.
// The loss head is the contrastive objective of ssl::stochastic_grad; its
// 1/2 ||P^T P||^2 regularizer is applied to the end-to-end map
// P = W_L ... W_1 and its gradient added to each g_{W_l} before quantization.

#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "fedq/datagen.hpp"
#include "fedq/linalg.hpp"
#include "fedq/quantkit.hpp"
#include "fedq/rng.hpp"

namespace fedq::client {

enum class Activation { kIdentity, kRelu };

struct LrSchedule {
  enum class Kind { kConstant, kInverseSqrt };

  Kind kind = Kind::kInverseSqrt;
  double base = 0.01;
  /// When set, the rate is indexed by round instead of by local epoch.
  bool constant_within_round = true;

  /// base, or base / sqrt(t + 1).
  double at(long t) const;
};

/// Weights of one layer at rest. Quantized in normal operation; dense only in
/// the unquantized reference mode.
class LayerWeights {
 public:
  explicit LayerWeights(quant::QuantizedTensor q) : store_(std::move(q)) {}
  explicit LayerWeights(Matrix dense) : store_(std::move(dense)) {}

  bool is_quantized() const { return std::holds_alternative<quant::QuantizedTensor>(store_); }
  const quant::QuantizedTensor& quantized() const;
  Matrix dense() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;

 private:
  std::variant<quant::QuantizedTensor, Matrix> store_;
};

struct TrainingOptions {
  int bitwidth = 8;
  int grad_extra_bits = 2;
  Activation activation = Activation::kIdentity;
  /// Off selects unquantized SGD with identical structure, for reference runs.
  bool quantize = true;
  bool quantize_activations = false;
  double aug_sigma = 0.1;
  /// 0 selects full-batch steps.
  int batch_size = 64;
  LrSchedule lr;

  int grad_bitwidth() const { return bitwidth + grad_extra_bits; }
};

struct StepStats {
  long epoch = 0;
  int round = 0;
  double alpha = 0.0;
  double grad_error = 0.0;     // ||eps_g||^2 summed over layers
  double weight_error = 0.0;   // ||eps_w||^2 summed over layers
  double grad_norm_sq = 0.0;   // ||g||^2 before quantization
  double weight_norm_sq = 0.0; // ||u||^2 of the pre-quantization update
};

struct QuantErrorStats {
  std::vector<StepStats> steps;

  double mean_grad_error() const;
  double mean_weight_error() const;
  double mean_grad_norm_sq() const;
  double max_grad_norm() const;
  void append(const QuantErrorStats& other);
};

struct ClientState {
  int client_id = 0;
  TrainingOptions options;
  std::vector<LayerWeights> model;
  long epoch_counter = 0;
  int round = 0;
  Rng rng{0};
  std::vector<std::uint32_t> batch_order;
  std::size_t batch_cursor = 0;

  int bitwidth() const { return options.bitwidth; }
  int grad_bitwidth() const { return options.grad_bitwidth(); }
  std::vector<Matrix> dense_model() const;
  std::vector<quant::QuantizedTensor> quantized_model() const;
};

/// Builds a client whose model is `init` quantized at the client bitwidth
/// with a fresh tanh codebook per layer, using the client's own stream.
ClientState make_client(int client_id, const TrainingOptions& options,
                        std::span<const Matrix> init, std::uint64_t seed);

/// Replaces the model with one received from the server.
void assign_model(ClientState& state, std::vector<quant::QuantizedTensor> model);

struct ForwardOptions {
  Activation activation = Activation::kIdentity;
  bool quantize_activations = false;
  int bitwidth = 8;
};

struct ForwardState {
  Matrix input;
  std::vector<Matrix> pre_activations;        // a~_l, l = 1..L
  std::vector<Matrix> activations;            // a_l
  std::vector<Matrix> quantized_activations;  // dequantized a^Q_l (== a_l when off)

  /// a^Q_{l-1} for 0-based layer l.
  const Matrix& layer_input(std::size_t l) const {
    return l == 0 ? input : quantized_activations[l - 1];
  }
  const Matrix& output() const { return quantized_activations.back(); }
};

ForwardState quantized_forward(std::span<const Matrix> weights, const Matrix& batch,
                               const ForwardOptions& options, Rng& rng);

struct BackwardOptions {
  Activation activation = Activation::kIdentity;
  bool quantize = true;
  int grad_bitwidth = 10;
};

struct BackwardResult {
  std::vector<Matrix> weight_grads;   // before quantization
  std::vector<Matrix> applied_grads;  // dequantized g^Q (== weight_grads when off)
  std::vector<quant::QuantizedTensor> quantized;  // empty when off
  double grad_error = 0.0;
  double grad_norm_sq = 0.0;
};

/// `direct_grads` are added to each layer's weight gradient before it is
/// quantized (the regularizer term); pass an empty span for none.
BackwardResult quantized_backward(std::span<const Matrix> weights, const ForwardState& forward,
                                  const Matrix& upstream, std::span<const Matrix> direct_grads,
                                  const BackwardOptions& options, Rng& rng);

/// P = W_L ... W_1.
Matrix effective_map(std::span<const Matrix> weights);

/// Gradients of 1/2 ||P^T P||_F^2 with respect to each W_l.
std::vector<Matrix> regularizer_grads(std::span<const Matrix> weights);

/// One weight update with step alpha; returns ||eps_w||^2 and bumps the
/// epoch counter.
double local_update(ClientState& state, std::span<const Matrix> grads, double alpha,
                    double* update_norm_sq = nullptr);

/// Draws the next minibatch and returns the quantized gradients at the
/// current model without updating it.
BackwardResult step_gradients(ClientState& state, const data::DataShard& shard);

/// One local epoch on the next minibatch of `shard`.
StepStats train_step(ClientState& state, const data::DataShard& shard);

/// E local epochs, then advances the round counter.
QuantErrorStats run_local_epochs(ClientState& state, const data::DataShard& shard, int epochs);

}  // namespace fedq::client
