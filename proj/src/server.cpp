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

#include "fedq/server.hpp"

#include <algorithm>
#include <string>

#include "fedq/error.hpp"

namespace fedq::server {

ServerState make_server(std::map<int, int> client_bitwidths, DenseModel initial) {
  if (client_bitwidths.empty()) raise(ErrorCode::kEmptyInput, "no clients");
  for (const auto& [id, bits] : client_bitwidths) {
    if (bits < 1 || bits > quant::kMaxRate) {
      raise(ErrorCode::kInvalidArgument, "client " + std::to_string(id) + " bitwidth out of range");
    }
  }
  ServerState s;
  s.client_bitwidths = std::move(client_bitwidths);
  s.global_model = std::move(initial);
  return s;
}

std::vector<DenseModel> dequantize_client_models(std::span<const QuantizedModel> models) {
  std::vector<DenseModel> out;
  out.reserve(models.size());
  for (const auto& m : models) {
    if (!models.empty() && m.size() != models.front().size()) {
      raise(ErrorCode::kShapeMismatch, "clients disagree on layer count");
    }
    DenseModel dense;
    dense.reserve(m.size());
    for (std::size_t l = 0; l < m.size(); ++l) {
      const auto& ref = models.front()[l];
      if (m[l].rows() != ref.rows() || m[l].cols() != ref.cols()) {
        raise(ErrorCode::kShapeMismatch, "layer " + std::to_string(l + 1) + " shapes differ");
      }
      dense.push_back(quant::dequantize(m[l]));
    }
    out.push_back(std::move(dense));
  }
  return out;
}

DenseModel aggregate(std::span<const DenseModel> models, std::span<const std::uint64_t> counts) {
  if (models.empty()) raise(ErrorCode::kEmptyInput, "nothing to aggregate");
  if (counts.size() != models.size()) {
    raise(ErrorCode::kShapeMismatch, "one sample count per model is required");
  }
  std::uint64_t total = 0;
  for (auto c : counts) {
    if (c == 0) raise(ErrorCode::kInvalidArgument, "sample counts must be positive");
    total += c;
  }
  const DenseModel& ref = models.front();
  for (const auto& m : models) {
    if (m.size() != ref.size()) raise(ErrorCode::kShapeMismatch, "models disagree on layer count");
    for (std::size_t l = 0; l < m.size(); ++l) {
      if (m[l].rows() != ref[l].rows() || m[l].cols() != ref[l].cols()) {
        raise(ErrorCode::kShapeMismatch, "layer " + std::to_string(l + 1) + " shapes differ");
      }
    }
  }
  DenseModel out;
  for (std::size_t l = 0; l < ref.size(); ++l) {
    Matrix acc = Matrix::Zero(ref[l].rows(), ref[l].cols());
    for (std::size_t k = 0; k < models.size(); ++k) {
      const double p = static_cast<double>(counts[k]) / static_cast<double>(total);
      acc += p * models[k][l];
    }
    out.push_back(std::move(acc));
  }
  return out;
}

Requantized requantize_for_client(const DenseModel& global, int bitwidth, Rng& rng) {
  if (bitwidth < 1 || bitwidth > quant::kMaxRate) {
    raise(ErrorCode::kInvalidArgument, "bitwidth out of range");
  }
  Requantized out;
  for (const auto& w : global) {
    auto cb = std::make_shared<const quant::Codebook>(
        quant::build_tanh_codebook(quant::elements(w), bitwidth));
    quant::QuantizedTensor q = quant::stochastic_quantize(w, std::move(cb), rng);
    out.error += (w - quant::dequantize(q)).squaredNorm();
    out.model.push_back(std::move(q));
  }
  return out;
}

std::uint64_t requant_seed(std::uint64_t seed, int round, int client_id) {
  const std::uint64_t stream =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(round)) << 32) |
      static_cast<std::uint32_t>(client_id);
  return derive_seed(derive_seed(seed, 0x5e5e5e5eULL), stream);
}

std::map<int, QuantizedModel> run_round(ServerState& server, std::vector<ClientReport> reports,
                                        std::uint64_t seed) {
  if (reports.empty()) raise(ErrorCode::kEmptyInput, "no client reports");
  std::sort(reports.begin(), reports.end(),
            [](const ClientReport& a, const ClientReport& b) { return a.client_id < b.client_id; });
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].client_id == reports[i - 1].client_id) {
      raise(ErrorCode::kInvalidArgument,
            "duplicate report from client " + std::to_string(reports[i].client_id));
    }
  }
  for (const auto& [id, bits] : server.client_bitwidths) {
    const bool found = std::any_of(reports.begin(), reports.end(),
                                   [id = id](const ClientReport& r) { return r.client_id == id; });
    if (!found) raise(ErrorCode::kMissingClient, "client " + std::to_string(id) + " did not report");
  }
  std::vector<QuantizedModel> models;
  std::vector<std::uint64_t> counts;
  for (auto& r : reports) {
    if (!server.client_bitwidths.count(r.client_id)) {
      raise(ErrorCode::kInvalidArgument, "unknown client " + std::to_string(r.client_id));
    }
    models.push_back(std::move(r.model));
    counts.push_back(r.sample_count);
  }
  const std::vector<DenseModel> dense = dequantize_client_models(models);
  DenseModel global = aggregate(dense, counts);
  if (!server.global_model.empty()) {
    if (global.size() != server.global_model.size()) {
      raise(ErrorCode::kShapeMismatch, "global model layer count changed");
    }
    for (std::size_t l = 0; l < global.size(); ++l) {
      if (global[l].rows() != server.global_model[l].rows() ||
          global[l].cols() != server.global_model[l].cols()) {
        raise(ErrorCode::kShapeMismatch, "global model layer shape changed");
      }
    }
  }
  server.global_model = std::move(global);
  ++server.round_counter;

  std::map<int, QuantizedModel> out;
  std::vector<double> errors;
  for (const auto& [id, bits] : server.client_bitwidths) {
    Rng rng(requant_seed(seed, server.round_counter, id));
    Requantized rq = requantize_for_client(server.global_model, bits, rng);
    errors.push_back(rq.error);
    out.emplace(id, std::move(rq.model));
  }
  server.requant_error_log.push_back(std::move(errors));
  return out;
}

}  // namespace fedq::server
