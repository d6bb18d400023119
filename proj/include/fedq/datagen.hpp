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

// Heterogeneous 2n-class client datasets.
//
// Client k holds `frequent_count` samples of each of its two dominant
// classes 2k-1 and 2k,
//
//   x = +/- e_k - sum_{i != k, i <= n} q_i * tau * e_i + mu * xi,
//
// with q_i ~ Uniform{0, 1} drawn per sample and coordinate and
// xi ~ N(0, I_d), plus `infrequent_count` samples x = e_i + mu * xi of class
// 2i-1 for every other source i. tau = d^(1/5), mu = d^(-1/5).

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fedq/linalg.hpp"
#include "fedq/rng.hpp"

namespace fedq::data {

struct DataGenParams {
  int n = 4;
  int d = 32;
  int frequent_count = 2000;
  double infrequent_exponent = 0.3;
  std::uint64_t seed = 1;
  /// Replaces mu = d^(-1/5). Zero turns the Gaussian noise off.
  std::optional<double> mu_override;

  double tau() const;
  double mu() const;
  /// ceil(d^beta).
  int infrequent_count() const;
  /// Throws ErrorCode::kInvalidParams on violation.
  void validate() const;
};

struct DataShard {
  int client_id = 0;   // 1-based
  Matrix samples;      // |D_k| x d
  std::vector<std::uint32_t> labels;  // classes in [1, 2n]
  std::optional<Matrix> covariance_cache;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(samples.cols()); }
};

/// Stream seed for client k: seed ^ splitmix64(k).
std::uint64_t client_stream_seed(std::uint64_t seed, int k);

DataShard generate_shard(const DataGenParams& params, int k, Rng& rng);

/// Uses the client's derived stream, so shards are independent of the order
/// or thread they are generated on.
DataShard generate_shard(const DataGenParams& params, int k);

Matrix empirical_covariance(const DataShard& shard);

/// Fills shard.covariance_cache if empty and returns it.
const Matrix& cached_covariance(DataShard& shard);

/// sum_k |D_k|/|D| X_k.
Matrix global_covariance(std::span<const DataShard> shards);

// Binary shard files: little-endian header (magic "FQDS", version u32,
// client u32, rows u64, d u64), row-major f64 samples, then u32 labels.
inline constexpr std::uint32_t kShardFormatVersion = 1;

void write_shard(const DataShard& shard, const std::filesystem::path& path);
DataShard read_shard(const std::filesystem::path& path);

std::filesystem::path shard_file_name(const std::filesystem::path& dir, int k);

/// Writes one file per client plus params.json describing `params`.
void write_shard_directory(const DataGenParams& params, std::span<const DataShard> shards,
                           const std::filesystem::path& dir);

/// Reads params.json and the n shard files written by write_shard_directory.
std::vector<DataShard> read_shard_directory(const std::filesystem::path& dir,
                                            DataGenParams* params_out = nullptr);

}  // namespace fedq::data
