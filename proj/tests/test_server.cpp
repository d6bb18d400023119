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


#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fedq/error.hpp"
#include "fedq/server.hpp"

using namespace fedq;
using namespace fedq::server;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

quant::QuantizedTensor quantize_tanh(const Matrix& w, int bits, Rng& rng) {
  auto cb = std::make_shared<const quant::Codebook>(
      quant::build_tanh_codebook(quant::elements(w), bits));
  return quant::stochastic_quantize(w, cb, rng);
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

TEST_CASE("dequantization goes through each client's codebook") {
  Rng rng(1);
  const Matrix w = random_matrix(rng, 2, 3);
  const QuantizedModel a = {quantize_tanh(w, 3, rng)};
  const QuantizedModel b = {quantize_tanh(w, 7, rng)};
  const std::vector<QuantizedModel> models = {a, b};
  const auto dense = dequantize_client_models(models);
  CHECK(dense[0][0] == quant::dequantize(a[0]));
  CHECK(dense[1][0] == quant::dequantize(b[0]));
}

TEST_CASE("aggregation examples") {
  const std::vector<DenseModel> two = {{scalar(0.0)}, {scalar(2.0)}};
  const std::vector<std::uint64_t> equal = {5, 5};
  CHECK(aggregate(two, equal)[0](0, 0) == 1.0);

  const std::vector<DenseModel> ab = {{scalar(0.0)}, {scalar(4.0)}};
  const std::vector<std::uint64_t> w31 = {3, 1};
  CHECK(aggregate(ab, w31)[0](0, 0) == 1.0);

  const std::vector<DenseModel> none;
  CHECK_THROWS_AS(aggregate(none, {}), Error);
  const std::vector<DenseModel> bad = {{scalar(0.0)}, {Matrix::Zero(2, 1)}};
  try {
    aggregate(bad, equal);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
  }
}

TEST_CASE("property: aggregate of identical models is the model") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseModel m = {random_matrix(rng, 1 + rng.below(4), 1 + rng.below(6)),
                          random_matrix(rng, 2, 3)};
    const std::size_t n = 1 + rng.below(8);
    const std::vector<DenseModel> models(n, m);
    std::vector<std::uint64_t> counts(n);
    for (auto& c : counts) c = 1 + rng.below(1000);
    const DenseModel g = aggregate(models, counts);
    for (std::size_t l = 0; l < m.size(); ++l)
      CHECK((g[l] - m[l]).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, m[l].cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("property: aggregate lies in the convex hull") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    std::vector<DenseModel> models;
    std::vector<std::uint64_t> counts;
    for (std::size_t k = 0; k < n; ++k) {
      models.push_back({random_matrix(rng, 2, 2)});
      counts.push_back(1 + rng.below(50));
    }
    const DenseModel g = aggregate(models, counts);
    for (Eigen::Index i = 0; i < 4; ++i) {
      double lo = INFINITY;
      double hi = -INFINITY;
      for (const auto& m : models) {
        lo = std::min(lo, m[0].data()[i]);
        hi = std::max(hi, m[0].data()[i]);
      }
      CHECK(g[0].data()[i] >= lo - 1e-12);
      CHECK(g[0].data()[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("requantization at codebook centers is exact") {
  Rng rng(4);
  const auto cb = std::make_shared<const quant::Codebook>(
      quant::build_tanh_codebook(quant::elements(random_matrix(rng, 3, 3)), 4));
  Matrix w(2, 2);
  w << cb->center(0), cb->center(3), cb->center(9), cb->center(15);
  const Requantized r = requantize_for_client({w}, 4, rng);
  CHECK(r.error == 0.0);
  CHECK(quant::dequantize(r.model[0]) == w);
}

TEST_CASE("requantization at sixteen bits is nearly lossless") {
  Rng rng(5);
  const DenseModel g = {random_matrix(rng, 4, 8)};
  const Requantized r = requantize_for_client(g, 16, rng);
  CHECK(r.error / g[0].squaredNorm() < 1e-4);
  CHECK(r.model[0].rate() == 16);
}

TEST_CASE("round trip of requantized models reproduces centers") {
  Rng rng(6);
  const DenseModel g = {random_matrix(rng, 3, 5)};
  const Requantized r = requantize_for_client(g, 5, rng);
  const Matrix d = quant::dequantize(r.model[0]);
  const auto centers = r.model[0].codebook().centers();
  for (Eigen::Index i = 0; i < d.size(); ++i)
    CHECK(std::find(centers.begin(), centers.end(), d.data()[i]) != centers.end());
}

TEST_CASE("run_round bookkeeping and errors") {
  Rng rng(7);
  const Matrix w = random_matrix(rng, 2, 3);
  ServerState s = make_server({{1, 4}, {2, 8}}, {w});
  std::vector<ClientReport> reports = {{1, {quantize_tanh(w, 4, rng)}, 10},
                                       {2, {quantize_tanh(w, 8, rng)}, 30}};
  const auto out = run_round(s, reports, 1);
  CHECK(s.round_counter == 1);
  REQUIRE(s.requant_error_log.size() == 1);
  CHECK(s.requant_error_log[0].size() == 2);
  for (double e : s.requant_error_log[0]) CHECK(e >= 0.0);
  CHECK(out.at(1)[0].rate() == 4);
  CHECK(out.at(2)[0].rate() == 8);
  const Matrix expected = 0.25 * quant::dequantize(reports[0].model[0]) +
                          0.75 * quant::dequantize(reports[1].model[0]);
  CHECK((s.global_model[0] - expected).cwiseAbs().maxCoeff() < 1e-12);

  try {
    run_round(s, {reports[0]}, 1);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingClient);
  }
  CHECK_THROWS_AS(run_round(s, {reports[0], reports[0]}, 1), Error);
  ClientReport odd = reports[1];
  odd.model = {quantize_tanh(random_matrix(rng, 3, 3), 8, rng)};
  try {
    run_round(s, {reports[0], odd}, 1);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
  }
}

TEST_CASE("property: run_round is invariant to report order") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    std::map<int, int> bits;
    std::vector<ClientReport> reports;
    for (int k = 1; k <= n; ++k) {
      bits[k] = 2 + static_cast<int>(rng.below(8));
      reports.push_back({k, {quantize_tanh(random_matrix(rng, 2, 4), bits[k], rng)},
                         1 + rng.below(100)});
    }
    ServerState a = make_server(bits, {});
    ServerState b = make_server(bits, {});
    const auto oa = run_round(a, reports, 3);
    std::shuffle(reports.begin(), reports.end(), rng.engine());
    const auto ob = run_round(b, reports, 3);
    CHECK(a.global_model[0] == b.global_model[0]);
    CHECK(a.requant_error_log == b.requant_error_log);
    for (int k = 1; k <= n; ++k) {
      CHECK(std::equal(oa.at(k)[0].indices().begin(), oa.at(k)[0].indices().end(),
                       ob.at(k)[0].indices().begin()));
    }
  }
}

TEST_CASE("requantization seeds differ by round and client") {
  CHECK(requant_seed(1, 1, 1) != requant_seed(1, 1, 2));
  CHECK(requant_seed(1, 1, 1) != requant_seed(1, 2, 1));
  CHECK(requant_seed(1, 1, 1) == requant_seed(1, 1, 1));
}
