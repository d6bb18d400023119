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


#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "fedq/datagen.hpp"
#include "fedq/error.hpp"
#include "fedq/sslcore.hpp"

using namespace fedq;
using namespace fedq::data;

TEST_CASE("tau and mu at d = 32") {
  DataGenParams p;
  p.d = 32;
  CHECK(p.tau() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(p.mu() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(p.tau() * p.mu() - 1.0) < 1e-12);
  CHECK(p.infrequent_count() == static_cast<int>(std::ceil(std::pow(32.0, 0.3))));
}

TEST_CASE("parameter validation") {
  DataGenParams p;
  p.n = 40;
  p.d = 32;
  CHECK_THROWS_AS(p.validate(), Error);
  p = DataGenParams{};
  p.frequent_count = 1;
  CHECK_THROWS_AS(p.validate(), Error);
  p = DataGenParams{};
  p.infrequent_exponent = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
  CHECK_THROWS_AS(generate_shard(DataGenParams{}, 0), Error);
}

TEST_CASE("shard composition") {
  DataGenParams p;
  p.n = 3;
  p.d = 16;
  p.frequent_count = 100;
  const DataShard s = generate_shard(p, 2);
  const int inf = p.infrequent_count();
  CHECK(s.client_id == 2);
  CHECK(s.samples.rows() == static_cast<Eigen::Index>(s.labels.size()));
  CHECK(s.size() == static_cast<std::size_t>(200 + 2 * inf));
  std::map<std::uint32_t, int> counts;
  for (auto l : s.labels) ++counts[l];
  CHECK(counts[3] == 100);
  CHECK(counts[4] == 100);
  CHECK(counts[1] == inf);
  CHECK(counts[5] == inf);
  CHECK(counts.count(2) == 0);
  CHECK(counts.count(6) == 0);
}

TEST_CASE("noise-free samples follow the class templates") {
  DataGenParams p;
  p.n = 2;
  p.d = 8;
  p.frequent_count = 50;
  p.mu_override = 0.0;
  const DataShard s = generate_shard(p, 1);
  for (Eigen::Index i = 0; i < s.samples.rows(); ++i) {
    const auto label = s.labels[static_cast<std::size_t>(i)];
    const auto row = s.samples.row(i);
    if (label == 1 || label == 2) {
      CHECK(row(0) == (label == 1 ? 1.0 : -1.0));
      CHECK((row(1) == 0.0 || row(1) == doctest::Approx(-p.tau())));
    } else {
      CHECK(label == 3);
      CHECK(row(1) == 1.0);
      CHECK(row(0) == 0.0);
    }
    for (int j = 2; j < 8; ++j) CHECK(row(j) == 0.0);
  }
}

TEST_CASE("covariance examples") {
  DataShard s;
  s.samples = Matrix::Zero(1, 3);
  s.samples(0, 0) = 1.0;
  s.labels = {1};
  Matrix X = empirical_covariance(s);
  CHECK(X(0, 0) == 1.0);
  CHECK(X.cwiseAbs().sum() == 1.0);

  s.samples = Matrix::Zero(2, 3);
  s.samples(0, 0) = 1.0;
  s.samples(1, 0) = -1.0;
  s.labels = {1, 2};
  X = empirical_covariance(s);
  CHECK(X(0, 0) == 1.0);
  CHECK(X.cwiseAbs().sum() == 1.0);

  DataShard empty;
  empty.samples = Matrix(0, 3);
  CHECK_THROWS_AS(empirical_covariance(empty), Error);
}

TEST_CASE("cached covariance matches the direct one") {
  DataGenParams p;
  p.n = 2;
  p.d = 8;
  p.frequent_count = 60;
  DataShard s = generate_shard(p, 1);
  const Matrix& c = cached_covariance(s);
  CHECK((c - empirical_covariance(s)).norm() < 1e-10);
  CHECK(s.covariance_cache.has_value());
}

TEST_CASE("global covariance is the pooled covariance") {
  DataGenParams p;
  p.n = 3;
  p.d = 10;
  p.frequent_count = 40;
  std::vector<DataShard> shards;
  for (int k = 1; k <= 3; ++k) shards.push_back(generate_shard(p, k));
  CHECK((global_covariance(std::span(shards.data(), 1)) - empirical_covariance(shards[0])).norm() <
        1e-12);

  DataShard pooled;
  Eigen::Index rows = 0;
  for (const auto& s : shards) rows += s.samples.rows();
  pooled.samples.resize(rows, p.d);
  Eigen::Index at = 0;
  for (const auto& s : shards) {
    pooled.samples.middleRows(at, s.samples.rows()) = s.samples;
    at += s.samples.rows();
    pooled.labels.insert(pooled.labels.end(), s.labels.begin(), s.labels.end());
  }
  CHECK((global_covariance(shards) - empirical_covariance(pooled)).norm() < 1e-10);

  // Equal sizes give the arithmetic mean.
  const std::vector<DataShard> two(shards.begin(), shards.begin() + 2);
  const Matrix mean = 0.5 * (empirical_covariance(two[0]) + empirical_covariance(two[1]));
  CHECK((global_covariance(two) - mean).norm() < 1e-12);
}

TEST_CASE("generation is deterministic and order independent") {
  DataGenParams p;
  p.n = 3;
  p.d = 12;
  p.frequent_count = 30;
  p.seed = 42;
  const DataShard b1 = generate_shard(p, 3);
  const DataShard a = generate_shard(p, 1);
  const DataShard b2 = generate_shard(p, 3);
  CHECK(b1.samples == b2.samples);
  CHECK(b1.labels == b2.labels);
  CHECK(a.samples.rows() == b1.samples.rows());
  p.seed = 43;
  CHECK(generate_shard(p, 3).samples != b1.samples);
}

TEST_CASE("off-support diagonal entries are of order mu squared") {
  DataGenParams p;
  p.n = 2;
  p.d = 32;
  p.frequent_count = 5000;
  const DataShard s = generate_shard(p, 1);
  const Matrix X = empirical_covariance(s);
  for (int i = p.n; i < p.d; ++i) CHECK(X(i, i) <= 5.0 * p.mu() * p.mu());
}

TEST_CASE("top eigenvalues dominate the rest") {
  DataGenParams p;
  p.n = 2;
  p.d = 32;
  p.frequent_count = 1000;
  const Matrix X = empirical_covariance(generate_shard(p, 1));
  const auto eig = ssl::sym_eig(X);
  CHECK(eig.values(p.n - 1) >= p.tau() * p.tau() / 4.0 * eig.values(p.n));
}

TEST_CASE("shard files round-trip bit for bit") {
  DataGenParams p;
  p.n = 2;
  p.d = 6;
  p.frequent_count = 20;
  std::vector<DataShard> shards = {generate_shard(p, 1), generate_shard(p, 2)};
  const auto dir = std::filesystem::temp_directory_path() / "fedq_test_shards";
  std::filesystem::remove_all(dir);
  write_shard_directory(p, shards, dir);
  DataGenParams back;
  const auto read = read_shard_directory(dir, &back);
  REQUIRE(read.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(read[k].client_id == shards[k].client_id);
    CHECK(read[k].samples == shards[k].samples);
    CHECK(read[k].labels == shards[k].labels);
  }
  CHECK(back.n == p.n);
  CHECK(back.d == p.d);
  CHECK(back.seed == p.seed);

  std::filesystem::resize_file(shard_file_name(dir, 2), 30);
  CHECK_THROWS_AS(read_shard(shard_file_name(dir, 2)), Error);
  std::filesystem::remove_all(dir);
}
