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


#include "fedq/probes.hpp"

#include <algorithm>
#include <cmath>

#include "fedq/analysis.hpp"
#include "fedq/error.hpp"
#include "fedq/experiment.hpp"
#include "fedq/quantkit.hpp"

namespace fedq::analysis {
namespace {

client::ClientState probe_client(const ExperimentConfig& cfg, int rate,
                                 const data::DataShard& shard, double* alpha0_out) {
  ExperimentConfig c = cfg;
  c.bitwidths.assign(static_cast<std::size_t>(c.n_clients), rate);
  const double alpha0 =
      c.lr.base ? *c.lr.base : default_alpha0(data::empirical_covariance(shard));
  if (alpha0_out) *alpha0_out = alpha0;
  return client::make_client(1, training_options(c, 0, alpha0), initial_model(c),
                             derive_seed(c.seeds.training, 1));
}

}  // namespace

std::vector<RateMse> quant_rate_probe(std::span<const int> rates, std::size_t samples,
                                      std::uint64_t seed) {
  if (rates.empty()) raise(ErrorCode::kInvalidArgument, "no rates");
  if (samples == 0) raise(ErrorCode::kInvalidArgument, "samples must be positive");
  Rng rng(seed);
  std::vector<double> xs(samples);
  for (auto& x : xs) x = std::clamp(rng.normal(), -3.0, 3.0);
  std::vector<RateMse> out;
  for (int r : rates) {
    const quant::Codebook cb = quant::build_uniform_codebook(-3.0, 3.0, r);
    Rng draw(derive_seed(seed, static_cast<std::uint64_t>(r)));
    out.push_back({r, quant::empirical_mse(cb, xs, draw)});
  }
  return out;
}

Lemma1Table lemma1_probe(const ExperimentConfig& cfg, std::span<const int> rates, int steps) {
  if (rates.size() < 3) raise(ErrorCode::kInvalidArgument, "need at least three rates");
  if (steps < 1) raise(ErrorCode::kInvalidArgument, "steps must be >= 1");
  cfg.validate();
  const data::DataShard shard = data::generate_shard(cfg.data_params(), 1);
  Lemma1Table table;
  std::vector<double> xs;
  std::vector<double> yg;
  std::vector<double> yw;
  for (int r : rates) {
    client::ClientState state = probe_client(cfg, r, shard, nullptr);
    const client::QuantErrorStats st = client::run_local_epochs(state, shard, steps);
    Lemma1Row row;
    row.rate = r;
    row.grad_error = st.mean_grad_error();
    row.weight_error = st.mean_weight_error();
    row.grad_norm_sq = st.mean_grad_norm_sq();
    for (const auto& s : st.steps) row.weight_norm_sq += s.weight_norm_sq;
    row.weight_norm_sq /= static_cast<double>(st.steps.size());
    table.rows.push_back(row);
    xs.push_back(r);
    yg.push_back(std::log2(std::max(row.grad_error, 1e-300)));
    yw.push_back(std::log2(std::max(row.weight_error, 1e-300)));
  }
  table.grad_slope = fit_slope(xs, yg);
  table.weight_slope = fit_slope(xs, yw);
  return table;
}

AlphaProbe alpha_probe(const ExperimentConfig& cfg, int rate, std::span<const double> alphas,
                       int warmup, int snapshots, int draws) {
  if (alphas.size() < 2) raise(ErrorCode::kInvalidArgument, "need at least two step sizes");
  if (warmup < 0 || snapshots < 1 || draws < 1) {
    raise(ErrorCode::kInvalidArgument, "warmup >= 0, snapshots >= 1 and draws >= 1 required");
  }
  cfg.validate();
  const data::DataShard shard = data::generate_shard(cfg.data_params(), 1);
  client::ClientState state = probe_client(cfg, rate, shard, nullptr);
  for (int i = 0; i < warmup; ++i) client::train_step(state, shard);

  std::vector<double> sums(alphas.size(), 0.0);
  for (int s = 0; s < snapshots; ++s) {
    client::ClientState probe = state;
    const client::BackwardResult br = client::step_gradients(probe, shard);
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      for (int k = 0; k < draws; ++k) {
        client::ClientState copy = state;
        copy.rng = Rng(derive_seed(cfg.seeds.training,
                                   0xa1fa0000ULL + static_cast<std::uint64_t>(s) * 1000003ULL +
                                       static_cast<std::uint64_t>(k)));
        sums[a] += client::local_update(copy, br.applied_grads, alphas[a]);
      }
    }
    client::train_step(state, shard);
  }
  AlphaProbe out;
  std::vector<double> lx;
  std::vector<double> ly;
  const double count = static_cast<double>(snapshots) * draws;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    out.rows.push_back({alphas[a], sums[a] / count});
    lx.push_back(std::log(alphas[a]));
    ly.push_back(std::log(std::max(sums[a] / count, 1e-300)));
  }
  out.slope = fit_slope(lx, ly);
  return out;
}

EpochSweep local_epoch_sweep(const ExperimentConfig& cfg, std::span<const int> epochs) {
  if (epochs.size() < 2) raise(ErrorCode::kInvalidArgument, "need at least two epoch counts");
  EpochSweep out;
  std::vector<double> lx;
  std::vector<double> ly;
  for (int e : epochs) {
    ExperimentConfig c = cfg;
    c.local_epochs = e;
    RunOptions opts;
    opts.write_files = false;
    opts.threads = 1;
    const RunResult res = run_experiment(c, opts);
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& round : res.requant_errors) {
      for (double v : round) {
        sum += v;
        ++count;
      }
    }
    const double mean = sum / static_cast<double>(count);
    out.rows.push_back({e, mean});
    lx.push_back(std::log(static_cast<double>(e)));
    ly.push_back(std::log(std::max(mean, 1e-300)));
  }
  out.slope = fit_slope(lx, ly);
  return out;
}

}  // namespace fedq::analysis
