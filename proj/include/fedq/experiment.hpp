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


// Bulk-synchronous federated runs: clients train in parallel between round
// barriers, the server aggregates sequentially, and one metrics row is
// written per round.
//
// metrics.csv columns, in order:
//   round, alpha, global_loss, moreau_surrogate,
//   then per client k: loss_k, eps_g_k, eps_w_k, eps_r_k, grad_norm_max_k,
//   then repr_1 .. repr_n.
// Floats use 17 significant digits. Wall-clock time goes to timing.csv so
// metrics.csv stays byte-identical across runs and thread counts.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedq/analysis.hpp"
#include "fedq/client.hpp"
#include "fedq/config.hpp"
#include "fedq/datagen.hpp"
#include "fedq/linalg.hpp"

namespace fedq {

struct MetricsRecord {
  int round = 0;
  double alpha = 0.0;
  double global_loss = 0.0;
  double moreau_surrogate = 0.0;  // NaN when disabled
  std::vector<double> client_loss;
  std::vector<double> eps_g;  // mean ||eps_g||^2 over the round's epochs
  std::vector<double> eps_w;
  std::vector<double> eps_r;
  std::vector<double> grad_norm_max;
  std::vector<double> representability;  // first n entries; NaN when disabled
  double wall_ms = 0.0;
};

struct RunOptions {
  /// Overrides cfg.output_dir. Ignored when write_files is off.
  std::optional<std::filesystem::path> out_dir;
  /// 0 means min(n_clients, hardware threads).
  int threads = 0;
  bool write_files = true;
  /// Called at the start of each round; may throw to abort the run.
  std::function<void(int round)> on_round;
};

struct RunResult {
  ExperimentConfig config;
  MetricsRecord initial;
  std::vector<MetricsRecord> records;
  std::vector<client::QuantErrorStats> client_stats;  // per client, all rounds
  std::vector<std::vector<double>> requant_errors;    // per round, per client
  std::vector<Matrix> global_model;
  Matrix global_covariance;
  analysis::TheoryParams theory;
  double alpha0 = 0.0;
  double eckart_young_loss = 0.0;
};

struct SurrogateSummary {
  /// Surrogate of the model each round starts from (rounds 1..T), paired with
  /// that round's step size.
  std::vector<double> surrogates;
  std::vector<double> alphas;
  std::vector<double> running_average;  // alpha-weighted average of surrogate^2
  double G = 0.0;    // max observed gradient norm
  double G_q = 0.0;  // from weight and requantization errors
  double phi0 = 0.0;
  double phi_min = 0.0;  // envelope at the closed-form optimum
  double rhs = 0.0;      // approximate bound
};

/// Needs metrics.moreau enabled and an L = 1 model or any depth through the
/// effective map.
SurrogateSummary surrogate_summary(const RunResult& result);

/// Shards for a config: generated, or read from data.data_dir.
std::vector<data::DataShard> load_or_generate_shards(const ExperimentConfig& cfg);

/// 0.05 / lambda_max(X).
double default_alpha0(const Matrix& global_cov);

/// Shared Gaussian initialization with the configured std.
std::vector<Matrix> initial_model(const ExperimentConfig& cfg);

/// Per-client training options derived from the config.
client::TrainingOptions training_options(const ExperimentConfig& cfg, int client_index,
                                         double alpha0);

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Header line of metrics.csv for n clients (no trailing newline).
std::string metrics_header(int n_clients);

/// One metrics.csv row (no trailing newline).
std::string metrics_row(const MetricsRecord& r);

/// "%.17g".
std::string format_double(double x);

/// Closed-form optimum summary of the configured data, as plain text.
std::string oracle_report(const ExperimentConfig& cfg);

struct ReportOutput {
  std::string summary;
  std::string long_csv;  // round,metric,value
};

/// Summarizes a metrics.csv file.
ReportOutput report_metrics(const std::filesystem::path& metrics_csv);

}  // namespace fedq
