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

// Server side of a round: codebook lookup, data-size weighted averaging, and
// per-client tanh requantization at each client's own bitwidth.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "fedq/linalg.hpp"
#include "fedq/quantkit.hpp"
#include "fedq/rng.hpp"

namespace fedq::server {

using QuantizedModel = std::vector<quant::QuantizedTensor>;
using DenseModel = std::vector<Matrix>;

struct ClientReport {
  int client_id = 0;
  QuantizedModel model;
  std::uint64_t sample_count = 0;
};

struct ServerState {
  DenseModel global_model;
  std::map<int, int> client_bitwidths;
  int round_counter = 0;
  /// One entry per round: ||eps_r||^2 per client, in client-id order.
  std::vector<std::vector<double>> requant_error_log;
};

ServerState make_server(std::map<int, int> client_bitwidths, DenseModel initial);

std::vector<DenseModel> dequantize_client_models(std::span<const QuantizedModel> models);

/// Weighted mean with p_k = count_k / total, summed in the given order.
DenseModel aggregate(std::span<const DenseModel> models, std::span<const std::uint64_t> counts);

struct Requantized {
  QuantizedModel model;
  double error = 0.0;  // ||w_G - dequantize(model)||^2
};

Requantized requantize_for_client(const DenseModel& global, int bitwidth, Rng& rng);

/// Requantization stream for one client in one round.
std::uint64_t requant_seed(std::uint64_t seed, int round, int client_id);

/// Dequantize, aggregate and requantize. Reports may arrive in any order; they
/// are sorted by client id first. Returns models keyed by client id.
std::map<int, QuantizedModel> run_round(ServerState& server, std::vector<ClientReport> reports,
                                        std::uint64_t seed);

}  // namespace fedq::server
