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


// Experiment configuration: JSON schema, defaults and validation.
//
//   {
//     "n_clients": 2, "d": 32, "bitwidths": [4, 8], "rounds": 10,
//     "grad_extra_bits": 2, "local_epochs": 1, "batch_size": 64,
//     "aug_sigma": 0.1, "output_dir": "out",
//     "lr": {"kind": "inverse_sqrt", "base": null, "constant_within_round": true},
//     "model": {"layers": [2], "activation": "identity", "m": 2,
//               "quantize_activations": null, "init_std": null},
//     "data": {"frequent_count": 2000, "infrequent_exponent": 0.3,
//              "mu_override": null, "identical": false, "data_dir": null},
//     "seeds": {"data": 1, "training": 2},
//     "metrics": {"moreau": true, "representability": true}
//   }
//
// Only n_clients, d, bitwidths and rounds are required. `lr.base` null means
// 0.05 / lambda_max of the global covariance. `model.m` defaults to the last
// layer width, which defaults to n_clients.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedq/client.hpp"
#include "fedq/datagen.hpp"

namespace fedq {

struct ModelConfig {
  std::vector<int> layers;  // output width of each layer; the last is m
  client::Activation activation = client::Activation::kIdentity;
  int m = 0;
  /// Unset means off for one layer and on for deeper encoders.
  std::optional<bool> quantize_activations;
  /// Unset means 0.1 / sqrt(d).
  std::optional<double> init_std;
};

struct DataConfig {
  int frequent_count = 2000;
  double infrequent_exponent = 0.3;
  std::optional<double> mu_override;
  /// Every client trains on the shard of client 1.
  bool identical = false;
  std::optional<std::string> data_dir;
};

struct LrConfig {
  client::LrSchedule::Kind kind = client::LrSchedule::Kind::kInverseSqrt;
  std::optional<double> base;
  bool constant_within_round = true;
};

struct SeedConfig {
  std::uint64_t data = 1;
  std::uint64_t training = 2;
};

struct MetricsConfig {
  bool moreau = true;
  bool representability = true;
};

struct ExperimentConfig {
  int n_clients = 0;
  int d = 0;
  std::vector<int> bitwidths;
  int rounds = 0;
  int grad_extra_bits = 2;
  int local_epochs = 1;
  int batch_size = 64;
  double aug_sigma = 0.1;
  std::string output_dir = "out";
  LrConfig lr;
  ModelConfig model;
  DataConfig data;
  SeedConfig seeds;
  MetricsConfig metrics;

  data::DataGenParams data_params() const;
  bool activations_quantized() const;
  double init_std() const;
  /// Throws kValidationError naming the first violated invariant.
  void validate() const;
};

/// Parses JSON text. Syntax errors raise kParseError with the line; type
/// errors and unknown keys raise kParseError naming the field.
ExperimentConfig parse_config(const std::string& text);

/// Reads and parses a file, then applies the FEDQ_SEED override.
ExperimentConfig load_config(const std::filesystem::path& path);

/// FEDQ_SEED, when set, replaces both seeds.
void apply_env_overrides(ExperimentConfig& cfg);

/// Fully resolved JSON form; parse_config(to_json(cfg)) round-trips.
std::string config_to_json(const ExperimentConfig& cfg);

const char* activation_name(client::Activation a);

}  // namespace fedq
