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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "fedq/config.hpp"
#include "fedq/error.hpp"

using namespace fedq;

namespace {

constexpr const char* kMinimal = R"({"n_clients": 2, "d": 32, "bitwidths": [4, 8], "rounds": 10})";

ErrorCode code_of(const std::string& text) {
  try {
    parse_config(text).validate();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a throw");
  return ErrorCode::kInvalidArgument;
}

std::string message_of(const std::string& text) {
  try {
    parse_config(text).validate();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal config gets defaults") {
  const ExperimentConfig c = parse_config(kMinimal);
  CHECK_NOTHROW(c.validate());
  CHECK(c.n_clients == 2);
  CHECK(c.local_epochs == 1);
  CHECK(c.grad_extra_bits == 2);
  CHECK(c.batch_size == 64);
  CHECK(c.model.layers == std::vector<int>{2});
  CHECK(c.model.m == 2);
  CHECK_FALSE(c.activations_quantized());
  CHECK(c.init_std() == doctest::Approx(0.1 / std::sqrt(32.0)));
  CHECK(c.lr.kind == client::LrSchedule::Kind::kInverseSqrt);
  CHECK(c.data_params().n == 2);
  CHECK(c.data_params().d == 32);
}

TEST_CASE("deeper encoders quantize activations by default") {
  const ExperimentConfig c = parse_config(
      R"({"n_clients": 2, "d": 16, "bitwidths": [4, 8], "rounds": 1,
          "model": {"layers": [8, 3], "activation": "relu"}})");
  CHECK(c.model.m == 3);
  CHECK(c.activations_quantized());
  CHECK(c.model.activation == client::Activation::kRelu);
}

TEST_CASE("validation errors name the invariant") {
  CHECK(code_of(R"({"n_clients": 2, "d": 32, "bitwidths": [4], "rounds": 10})") ==
        ErrorCode::kValidationError);
  CHECK(message_of(R"({"n_clients": 2, "d": 32, "bitwidths": [4], "rounds": 10})")
            .find("bitwidths") != std::string::npos);
  CHECK(code_of(R"({"n_clients": 2, "d": 32, "bitwidths": [4, 8], "rounds": -1})") ==
        ErrorCode::kValidationError);
  CHECK(message_of(R"({"n_clients": 2, "d": 32, "bitwidths": [4, 8], "rounds": 0})")
            .find("rounds") != std::string::npos);
  CHECK(code_of(R"({"n_clients": 2, "d": 32, "bitwidths": [0, 8], "rounds": 1})") ==
        ErrorCode::kValidationError);
  CHECK(code_of(R"({"n_clients": 2, "d": 32, "bitwidths": [4, 8], "rounds": 1, "local_epochs": 0})") ==
        ErrorCode::kValidationError);
  CHECK(code_of(R"({"n_clients": 2, "d": 32, "bitwidths": [4, 8], "rounds": 1,
                    "model": {"layers": [4], "m": 3}})") == ErrorCode::kValidationError);
  CHECK(code_of(R"({"n_clients": 40, "d": 32, "bitwidths": [4], "rounds": 1})") ==
        ErrorCode::kValidationError);
}

TEST_CASE("parse errors carry a line or a field") {
  const std::string broken = "{\n  \"n_clients\": 2,\n  \"d\": ,\n}";
  CHECK(code_of(broken) == ErrorCode::kParseError);
  CHECK(message_of(broken).find("line 3") != std::string::npos);

  const std::string unknown =
      R"({"n_clients": 2, "d": 32, "bitwidths": [4, 8], "rounds": 1, "lr": {"bse": 0.1}})";
  CHECK(code_of(unknown) == ErrorCode::kParseError);
  CHECK(message_of(unknown).find("lr.bse") != std::string::npos);

  const std::string typed = R"({"n_clients": "two", "d": 32, "bitwidths": [4, 8], "rounds": 1})";
  CHECK(code_of(typed) == ErrorCode::kParseError);
  CHECK(message_of(typed).find("n_clients") != std::string::npos);

  CHECK(code_of(R"({"d": 32, "bitwidths": [4, 8], "rounds": 1})") == ErrorCode::kParseError);
  CHECK(code_of(R"({"n_clients": 2, "d": 32, "bitwidths": [4, 8.5], "rounds": 1})") ==
        ErrorCode::kParseError);
  CHECK(code_of("[1, 2]") == ErrorCode::kParseError);
}

TEST_CASE("config JSON round-trips") {
  const ExperimentConfig a = parse_config(
      R"({"n_clients": 3, "d": 12, "bitwidths": [2, 5, 9], "rounds": 7, "local_epochs": 3,
          "batch_size": 0, "aug_sigma": 0.25, "grad_extra_bits": 1,
          "lr": {"kind": "constant", "base": 0.02, "constant_within_round": false},
          "model": {"layers": [6, 3], "activation": "relu", "quantize_activations": false,
                    "init_std": 0.3},
          "data": {"frequent_count": 100, "infrequent_exponent": 0.2, "mu_override": 0.0},
          "seeds": {"data": 9, "training": 10}, "metrics": {"moreau": false},
          "output_dir": "somewhere"})");
  const std::string text = config_to_json(a);
  const ExperimentConfig b = parse_config(text);
  CHECK(config_to_json(b) == text);
  CHECK(b.bitwidths == a.bitwidths);
  CHECK(b.lr.base == a.lr.base);
  CHECK_FALSE(b.activations_quantized());
  CHECK(b.init_std() == 0.3);
  CHECK(b.data.mu_override == 0.0);
  CHECK(b.seeds.training == 10);
  CHECK_FALSE(b.metrics.moreau);
  CHECK(b.output_dir == "somewhere");
}

TEST_CASE("FEDQ_SEED overrides both seeds when loading a file") {
  const auto path = std::filesystem::temp_directory_path() / "fedq_test_config.json";
  std::ofstream(path) << kMinimal;
  ::setenv("FEDQ_SEED", "1234", 1);
  const ExperimentConfig c = load_config(path);
  CHECK(c.seeds.data == 1234);
  CHECK(c.seeds.training == 1234);
  ::setenv("FEDQ_SEED", "-5", 1);
  CHECK_THROWS_AS(load_config(path), Error);
  ::unsetenv("FEDQ_SEED");
  CHECK(load_config(path).seeds.data == 1);
  std::filesystem::remove(path);
  try {
    load_config(path);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIoError);
  }
}
