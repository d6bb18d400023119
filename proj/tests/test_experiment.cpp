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
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fedq/config.hpp"
#include "fedq/error.hpp"
#include "fedq/experiment.hpp"
#include "fedq/sslcore.hpp"
#include "json.hpp"

using namespace fedq;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fedq_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config() {
  return parse_config(R"({"n_clients": 2, "d": 8, "bitwidths": [4, 8], "rounds": 4,
      "local_epochs": 2, "batch_size": 32, "data": {"frequent_count": 100},
      "model": {"init_std": 0.5}})");
}

}  // namespace

TEST_CASE("double formatting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(NAN) == "nan");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("a run writes its artifacts") {
  const fs::path out = scratch("run");
  RunOptions o;
  o.out_dir = out;
  const RunResult r = run_experiment(small_config(), o);
  REQUIRE(r.records.size() == 4);
  const auto lines = lines_of(read_file(out / "metrics.csv"));
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == metrics_header(2));
  for (int t = 1; t <= 4; ++t) {
    CHECK(lines[static_cast<std::size_t>(t)].rfind(std::to_string(t) + ",", 0) == 0);
    CHECK(r.records[static_cast<std::size_t>(t - 1)].round == t);
  }
  CHECK(lines_of(read_file(out / "timing.csv")).size() == 5);
  const ExperimentConfig echo = parse_config(read_file(out / "config.json"));
  CHECK(echo.lr.base.has_value());
  CHECK(echo.seeds.training == small_config().seeds.training);
  const auto summary = nlohmann::json::parse(read_file(out / "summary.json"));
  CHECK(summary.contains("eckart_young_loss"));
  for (const auto& rec : r.records) {
    for (double v : rec.representability) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
    for (double e : rec.eps_r) CHECK(e >= 0.0);
  }
  fs::remove_all(out);
}

TEST_CASE("runs are reproducible and thread-count independent") {
  ExperimentConfig cfg = small_config();
  cfg.n_clients = 3;
  cfg.bitwidths = {3, 5, 7};
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  RunOptions o;
  o.out_dir = a;
  o.threads = 1;
  run_experiment(cfg, o);
  o.out_dir = b;
  o.threads = 3;
  run_experiment(cfg, o);
  CHECK(read_file(a / "metrics.csv") == read_file(b / "metrics.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("an aborted run keeps the completed rows") {
  const fs::path out = scratch("abort");
  RunOptions o;
  o.out_dir = out;
  o.on_round = [](int round) {
    if (round == 3) throw std::runtime_error("stop");
  };
  CHECK_THROWS(run_experiment(small_config(), o));
  const auto lines = lines_of(read_file(out / "metrics.csv"));
  CHECK(lines.size() == 3);  // header and rounds 1, 2
  fs::remove_all(out);
}

TEST_CASE("a lossless single client matches the global model") {
  const ExperimentConfig cfg = parse_config(R"({"n_clients": 1, "d": 8, "bitwidths": [16],
      "rounds": 1, "grad_extra_bits": 0, "data": {"frequent_count": 100}})");
  RunOptions o;
  o.write_files = false;
  const RunResult r = run_experiment(cfg, o);
  const double rel = r.requant_errors[0][0] / r.global_model[0].squaredNorm();
  CHECK(rel < 1e-4);
}

TEST_CASE("the reference instance reduces the global loss") {
  const ExperimentConfig cfg = load_config(fs::path(FEDQ_SOURCE_DIR) / "configs" / "reference.json");
  RunOptions o;
  o.write_files = false;
  const RunResult r = run_experiment(cfg, o);
  CHECK(r.records.back().global_loss < 0.25 * r.initial.global_loss);
  CHECK(r.records.back().global_loss >= r.eckart_young_loss - 1e-9);
}

TEST_CASE("identical data gives every client the same shard") {
  ExperimentConfig cfg = small_config();
  cfg.data.identical = true;
  const auto shards = load_or_generate_shards(cfg);
  REQUIRE(shards.size() == 2);
  CHECK(shards[0].samples == shards[1].samples);
  CHECK(shards[1].client_id == 2);
}

TEST_CASE("shards can be read from a data directory") {
  const fs::path dir = scratch("data_dir");
  ExperimentConfig cfg = small_config();
  const auto generated = load_or_generate_shards(cfg);
  data::write_shard_directory(cfg.data_params(), generated, dir);
  cfg.data.data_dir = dir.string();
  const auto read = load_or_generate_shards(cfg);
  CHECK(read[1].samples == generated[1].samples);
  cfg.d = 9;
  CHECK_THROWS_AS(load_or_generate_shards(cfg), Error);
  fs::remove_all(dir);
}

TEST_CASE("oracle report states the optimum loss") {
  const ExperimentConfig cfg = small_config();
  const std::string text = oracle_report(cfg);
  const auto shards = load_or_generate_shards(cfg);
  const Matrix X = data::global_covariance(shards);
  const auto eig = ssl::sym_eig(X);
  double tail = 0.0;
  for (Eigen::Index i = 2; i < eig.values.size(); ++i) tail += eig.values(i) * eig.values(i);
  const auto at = text.find("eckart_young_loss");
  REQUIRE(at != std::string::npos);
  const double reported = std::stod(text.substr(text.find_first_of("0123456789", at + 17)));
  CHECK(std::abs(reported - tail) < 1e-8);
}

TEST_CASE("report summarizes a metrics file") {
  const fs::path out = scratch("report");
  RunOptions o;
  o.out_dir = out;
  run_experiment(small_config(), o);
  const ReportOutput rep = report_metrics(out / "metrics.csv");
  CHECK(rep.summary.find("rounds") != std::string::npos);
  const auto lines = lines_of(rep.long_csv);
  CHECK(lines[0] == "round,metric,value");
  // 4 rounds times (3 global metrics + 5 per client * 2 + 2 representability) values.
  CHECK(lines.size() == 1 + 4 * (3 + 10 + 2));
  CHECK_THROWS_AS(report_metrics(out / "missing.csv"), Error);
  fs::remove_all(out);
}
