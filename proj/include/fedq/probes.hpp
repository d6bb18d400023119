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


// Measurement probes behind the rate, step-size and local-epoch scaling
// checks. Each probe is deterministic in its seed.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedq/config.hpp"

namespace fedq::analysis {

struct RateMse {
  int rate = 0;
  double mse = 0.0;
};

/// MSE of stochastic quantization of N(0,1) samples clipped to [-3, 3] with
/// a uniform codebook on [-3, 3], one row per rate.
std::vector<RateMse> quant_rate_probe(std::span<const int> rates, std::size_t samples,
                                      std::uint64_t seed);

struct Lemma1Row {
  int rate = 0;
  double grad_error = 0.0;    // mean ||eps_g||^2
  double weight_error = 0.0;  // mean ||eps_w||^2
  double grad_norm_sq = 0.0;  // mean ||g||^2
  double weight_norm_sq = 0.0;
};

struct Lemma1Table {
  std::vector<Lemma1Row> rows;
  double grad_slope = 0.0;    // log2(grad_error) against rate
  double weight_slope = 0.0;  // log2(weight_error) against rate
};

/// Single-client training of client 1 at each rate for `steps` epochs with
/// the configured data, schedule and seeds. The rate sets the client
/// bitwidth; gradients use rate + cfg.grad_extra_bits.
Lemma1Table lemma1_probe(const ExperimentConfig& cfg, std::span<const int> rates, int steps);

struct AlphaRow {
  double alpha = 0.0;
  double weight_error = 0.0;  // mean ||eps_w||^2 over snapshots and draws
};

struct AlphaProbe {
  std::vector<AlphaRow> rows;
  double slope = 0.0;  // log(weight_error) against log(alpha)
};

/// Client 1 at `rate` bits follows a reference trajectory of `warmup` epochs
/// at the configured schedule. At each of `snapshots` later epochs the
/// quantized gradient is computed once and local_update is applied to copies
/// of the state with every alpha, `draws` times each.
AlphaProbe alpha_probe(const ExperimentConfig& cfg, int rate, std::span<const double> alphas,
                       int warmup, int snapshots, int draws);

struct EpochRow {
  int epochs = 0;
  double requant_error = 0.0;  // mean ||eps_r||^2 over rounds and clients
};

struct EpochSweep {
  std::vector<EpochRow> rows;
  double slope = 0.0;  // log(requant_error) against log(E)
};

/// Full federated runs at each E with everything else from cfg.
EpochSweep local_epoch_sweep(const ExperimentConfig& cfg, std::span<const int> epochs);

}  // namespace fedq::analysis
