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

#include "fedq/datagen.hpp"

#include <cmath>
#include <string>

#include "fedq/error.hpp"

namespace fedq::data {

double DataGenParams::tau() const { return std::pow(static_cast<double>(d), 0.2); }

double DataGenParams::mu() const {
  if (mu_override) return *mu_override;
  return std::pow(static_cast<double>(d), -0.2);
}

int DataGenParams::infrequent_count() const {
  const double raw = std::pow(static_cast<double>(d), infrequent_exponent);
  return static_cast<int>(std::ceil(raw - 1e-9));
}

void DataGenParams::validate() const {
  auto fail = [](const std::string& what) { raise(ErrorCode::kInvalidParams, what); };
  if (n < 1) fail("n must be >= 1");
  if (d < 1) fail("d must be >= 1");
  if (n > d) fail("n must not exceed d");
  if (frequent_count < 1) fail("frequent_count must be positive");
  if (!(infrequent_exponent > 0.0 && infrequent_exponent < 1.0)) {
    fail("infrequent_exponent must lie in (0, 1)");
  }
  if (static_cast<long long>(n) * infrequent_count() > frequent_count) {
    fail("n * infrequent_count must not exceed frequent_count");
  }
  if (mu_override && (!std::isfinite(*mu_override) || *mu_override < 0.0)) {
    fail("mu override must be finite and non-negative");
  }
}

std::uint64_t client_stream_seed(std::uint64_t seed, int k) {
  return derive_seed(seed, static_cast<std::uint64_t>(k));
}

DataShard generate_shard(const DataGenParams& params, int k, Rng& rng) {
  params.validate();
  if (k < 1 || k > params.n) {
    raise(ErrorCode::kInvalidParams, "client index " + std::to_string(k) + " outside [1, n]");
  }
  const int n = params.n;
  const int d = params.d;
  const double tau = params.tau();
  const double mu = params.mu();
  const int frequent = params.frequent_count;
  const int infrequent = n > 1 ? params.infrequent_count() : 0;
  const Eigen::Index rows = 2 * static_cast<Eigen::Index>(frequent) +
                            static_cast<Eigen::Index>(n - 1) * infrequent;

  DataShard shard;
  shard.client_id = k;
  shard.samples = Matrix::Zero(rows, d);
  shard.labels.reserve(static_cast<std::size_t>(rows));

  Eigen::Index row = 0;
  auto add_noise = [&](Eigen::Index r) {
    for (int j = 0; j < d; ++j) shard.samples(r, j) += mu * rng.normal();
  };

  // Dominant classes 2k-1 (+e_k) and 2k (-e_k).
  for (int sign : {+1, -1}) {
    const auto label = static_cast<std::uint32_t>(sign > 0 ? 2 * k - 1 : 2 * k);
    for (int s = 0; s < frequent; ++s, ++row) {
      shard.samples(row, k - 1) = sign;
      for (int i = 1; i <= n; ++i) {
        if (i == k) continue;
        if (rng.uniform() < 0.5) shard.samples(row, i - 1) -= tau;
      }
      add_noise(row);
      shard.labels.push_back(label);
    }
  }
  // Infrequent class 2i-1 from every other source; class 2i stays empty.
  for (int i = 1; i <= n; ++i) {
    if (i == k) continue;
    for (int s = 0; s < infrequent; ++s, ++row) {
      shard.samples(row, i - 1) = 1.0;
      add_noise(row);
      shard.labels.push_back(static_cast<std::uint32_t>(2 * i - 1));
    }
  }
  return shard;
}

DataShard generate_shard(const DataGenParams& params, int k) {
  Rng rng(client_stream_seed(params.seed, k));
  return generate_shard(params, k, rng);
}

Matrix empirical_covariance(const DataShard& shard) {
  if (shard.size() == 0 || shard.samples.rows() == 0) {
    raise(ErrorCode::kEmptyInput, "covariance of an empty shard");
  }
  const double inv = 1.0 / static_cast<double>(shard.samples.rows());
  Matrix cov = (shard.samples.transpose() * shard.samples) * inv;
  // Mirror the lower triangle so the result is exactly symmetric.
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  return cov;
}

const Matrix& cached_covariance(DataShard& shard) {
  if (!shard.covariance_cache) shard.covariance_cache = empirical_covariance(shard);
  return *shard.covariance_cache;
}

Matrix global_covariance(std::span<const DataShard> shards) {
  if (shards.empty()) raise(ErrorCode::kEmptyInput, "no shards");
  const Eigen::Index d = shards.front().samples.cols();
  double total = 0.0;
  for (const auto& s : shards) {
    if (s.samples.cols() != d) raise(ErrorCode::kDimensionMismatch, "shards disagree on d");
    if (s.samples.rows() == 0) raise(ErrorCode::kEmptyInput, "empty shard");
    total += static_cast<double>(s.samples.rows());
  }
  Matrix acc = Matrix::Zero(d, d);
  for (const auto& s : shards) {
    const Matrix cov = s.covariance_cache ? *s.covariance_cache : empirical_covariance(s);
    acc += (static_cast<double>(s.samples.rows()) / total) * cov;
  }
  acc.triangularView<Eigen::StrictlyUpper>() = acc.transpose();
  return acc;
}

}  // namespace fedq::data
