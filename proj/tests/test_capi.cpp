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
#include <cstdio>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "fedq/fedq.h"

namespace fs = std::filesystem;

namespace {

constexpr const char* kSmall = R"({"n_clients": 2, "d": 8, "bitwidths": [4, 8], "rounds": 3,
    "data": {"frequent_count": 100}, "model": {"init_std": 0.5}})";

}  // namespace

TEST_CASE("version and status strings") {
  CHECK(std::string(fedq_version()).size() > 0);
  CHECK(std::string(fedq_status_string(FEDQ_OK)) == "ok");
  CHECK(std::string(fedq_status_string(FEDQ_PARSE)).size() > 0);
}

TEST_CASE("config from JSON and back") {
  fedq_config* cfg = nullptr;
  REQUIRE(fedq_config_from_json(kSmall, &cfg) == FEDQ_OK);
  char* text = nullptr;
  REQUIRE(fedq_config_to_json(cfg, &text) == FEDQ_OK);
  CHECK(std::string(text).find("\"n_clients\"") != std::string::npos);
  fedq_string_free(text);
  fedq_config_free(cfg);
}

TEST_CASE("errors map to status codes") {
  fedq_config* cfg = nullptr;
  CHECK(fedq_config_from_json("{", &cfg) == FEDQ_PARSE);
  CHECK(cfg == nullptr);
  CHECK(std::string(fedq_last_error()).find("line") != std::string::npos);
  CHECK(fedq_config_from_json(R"({"n_clients": 2, "d": 8, "bitwidths": [4], "rounds": 1})",
                              &cfg) == FEDQ_VALIDATION);
  CHECK(std::string(fedq_last_error()).find("bitwidths") != std::string::npos);
  CHECK(fedq_config_load("/nonexistent/fedq.json", &cfg) == FEDQ_IO);
  CHECK(fedq_config_from_json(nullptr, &cfg) == FEDQ_INVALID_ARGUMENT);
  CHECK(fedq_config_from_json(kSmall, nullptr) == FEDQ_INVALID_ARGUMENT);
  fedq_config_free(nullptr);
  fedq_run_result_free(nullptr);
  fedq_string_free(nullptr);
}

TEST_CASE("run through the C API") {
  fedq_config* cfg = nullptr;
  REQUIRE(fedq_config_from_json(kSmall, &cfg) == FEDQ_OK);
  const fs::path out = fs::temp_directory_path() / "fedq_test_capi_run";
  fs::remove_all(out);
  fedq_run_result* r = nullptr;
  REQUIRE(fedq_run(cfg, out.string().c_str(), 1, &r) == FEDQ_OK);
  CHECK(fedq_run_result_rounds(r) == 3);
  CHECK(std::isfinite(fedq_run_result_global_loss(r, 0)));
  CHECK(std::isfinite(fedq_run_result_global_loss(r, 3)));
  CHECK(std::isnan(fedq_run_result_global_loss(r, 4)));
  CHECK(fedq_run_result_global_loss(r, 3) >= fedq_run_result_eckart_young_loss(r) - 1e-9);
  CHECK(fedq_run_result_moreau_surrogate(r, 1) >= 0.0);
  CHECK(fs::exists(out / "metrics.csv"));
  fedq_run_result_free(r);

  char* summary = nullptr;
  const fs::path long_csv = out / "long.csv";
  REQUIRE(fedq_report((out / "metrics.csv").string().c_str(), long_csv.string().c_str(),
                      &summary) == FEDQ_OK);
  CHECK(fs::exists(long_csv));
  fedq_string_free(summary);

  char* oracle = nullptr;
  REQUIRE(fedq_oracle(cfg, &oracle) == FEDQ_OK);
  CHECK(std::string(oracle).find("eckart_young_loss") != std::string::npos);
  fedq_string_free(oracle);

  const fs::path shards = out / "shards";
  REQUIRE(fedq_datagen(cfg, shards.string().c_str()) == FEDQ_OK);
  CHECK(fs::exists(shards / "params.json"));
  fedq_config_free(cfg);
  fs::remove_all(out);
}

TEST_CASE("quantization probe through the C API") {
  const int rates[] = {3, 4, 5};
  double mse[3] = {0, 0, 0};
  REQUIRE(fedq_quantprobe(rates, 3, 50000, 7, nullptr, mse) == FEDQ_OK);
  CHECK(mse[0] > mse[1]);
  CHECK(mse[1] > mse[2]);
  const int bad[] = {0};
  CHECK(fedq_quantprobe(bad, 1, 100, 7, nullptr, mse) != FEDQ_OK);
}
