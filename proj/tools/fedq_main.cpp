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


// fedq command-line front end. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedq/fedq.h"

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

// Bad config content is the caller's mistake, so it exits like a usage error.
int fail(fedq_status st) {
  std::cerr << "fedq: " << fedq_status_string(st) << ": " << fedq_last_error() << '\n';
  return st == FEDQ_PARSE || st == FEDQ_VALIDATION ? kUsageError : kRuntimeError;
}

// "3..8" or "3,4,5".
bool parse_rates(const std::string& text, std::vector<int>& out) {
  out.clear();
  try {
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
      std::size_t used = 0;
      const int lo = std::stoi(text.substr(0, dots), &used);
      if (used != dots) return false;
      const std::string rest = text.substr(dots + 2);
      const int hi = std::stoi(rest, &used);
      if (used != rest.size() || hi < lo) return false;
      for (int r = lo; r <= hi; ++r) out.push_back(r);
      return true;
    }
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto comma = text.find(',', start);
      const std::string item =
          text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) return false;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } catch (const std::exception&) {
    return false;
  }
  return !out.empty();
}

struct ConfigHandle {
  fedq_config* ptr = nullptr;
  ~ConfigHandle() { fedq_config_free(ptr); }
};

int cmd_run(const std::string& config, const std::string& out, int threads) {
  ConfigHandle cfg;
  fedq_status st = fedq_config_load(config.c_str(), &cfg.ptr);
  if (st != FEDQ_OK) return fail(st);
  fedq_run_result* result = nullptr;
  st = fedq_run(cfg.ptr, out.empty() ? nullptr : out.c_str(), threads, &result);
  if (st != FEDQ_OK) return fail(st);
  const int rounds = fedq_run_result_rounds(result);
  std::printf("rounds %d  global_loss %.6g -> %.6g  (optimum %.6g)\n", rounds,
              fedq_run_result_global_loss(result, 0), fedq_run_result_global_loss(result, rounds),
              fedq_run_result_eckart_young_loss(result));
  fedq_run_result_free(result);
  return 0;
}

int cmd_datagen(const std::string& config, const std::string& out) {
  ConfigHandle cfg;
  fedq_status st = fedq_config_load(config.c_str(), &cfg.ptr);
  if (st != FEDQ_OK) return fail(st);
  st = fedq_datagen(cfg.ptr, out.c_str());
  if (st != FEDQ_OK) return fail(st);
  std::printf("wrote shards to %s\n", out.c_str());
  return 0;
}

int cmd_quantprobe(const std::vector<int>& rates, std::uint64_t samples, std::uint64_t seed,
                   const std::string& out) {
  std::vector<double> mse(rates.size());
  const fedq_status st = fedq_quantprobe(rates.data(), rates.size(), samples, seed,
                                         out.empty() ? nullptr : out.c_str(), mse.data());
  if (st != FEDQ_OK) return fail(st);
  if (out.empty()) {
    std::printf("rate,mse\n");
    for (std::size_t i = 0; i < rates.size(); ++i) std::printf("%d,%.17g\n", rates[i], mse[i]);
  }
  return 0;
}

int cmd_oracle(const std::string& config) {
  ConfigHandle cfg;
  fedq_status st = fedq_config_load(config.c_str(), &cfg.ptr);
  if (st != FEDQ_OK) return fail(st);
  char* report = nullptr;
  st = fedq_oracle(cfg.ptr, &report);
  if (st != FEDQ_OK) return fail(st);
  std::fputs(report, stdout);
  fedq_string_free(report);
  return 0;
}

int cmd_report(const std::string& metrics, std::string long_out) {
  if (long_out.empty()) {
    long_out = (std::filesystem::path(metrics).parent_path() / "metrics_long.csv").string();
  }
  char* summary = nullptr;
  const fedq_status st = fedq_report(metrics.c_str(), long_out.c_str(), &summary);
  if (st != FEDQ_OK) return fail(st);
  std::fputs(summary, stdout);
  std::printf("long-format csv: %s\n", long_out.c_str());
  fedq_string_free(summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated low-bitwidth self-supervised learning simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fedq_version());

  std::string config;
  std::string out;
  int threads = 0;
  auto* run = app.add_subcommand("run", "Run a federated experiment");
  run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (default: config output_dir)");
  run->add_option("--threads", threads, "Worker threads (0: automatic)")
      ->check(CLI::NonNegativeNumber);

  std::string dg_config;
  std::string dg_out;
  auto* datagen = app.add_subcommand("datagen", "Generate client shards");
  datagen->add_option("--config", dg_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  datagen->add_option("--out", dg_out, "Output directory")->required();

  std::string rates_text = "3..8";
  std::uint64_t samples = 1000000;
  std::uint64_t seed = 7;
  std::string qp_out;
  auto* quantprobe = app.add_subcommand("quantprobe", "Quantization MSE against rate");
  quantprobe->add_option("--rates", rates_text, "Rates as lo..hi or a comma list")
      ->capture_default_str();
  quantprobe->add_option("--samples", samples, "Number of samples")->capture_default_str();
  quantprobe->add_option("--seed", seed, "Random seed")->capture_default_str();
  quantprobe->add_option("--out", qp_out, "CSV output path (default: stdout)");

  std::string or_config;
  auto* oracle = app.add_subcommand("oracle", "Closed-form optimum report");
  oracle->add_option("--config", or_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  std::string metrics;
  std::string long_out;
  auto* report = app.add_subcommand("report", "Summarize a metrics.csv file");
  report->add_option("--metrics", metrics, "metrics.csv path")->required()->check(CLI::ExistingFile);
  report->add_option("--long-out", long_out,
                     "Long-format CSV path (default: metrics_long.csv beside the input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "fedq: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  if (*run) return cmd_run(config, out, threads);
  if (*datagen) return cmd_datagen(dg_config, dg_out);
  if (*quantprobe) {
    std::vector<int> rates;
    if (!parse_rates(rates_text, rates)) {
      std::cerr << "fedq: --rates expects lo..hi or a comma list, got '" << rates_text << "'\n";
      return kUsageError;
    }
    return cmd_quantprobe(rates, samples, seed, qp_out);
  }
  if (*oracle) return cmd_oracle(or_config);
  if (*report) return cmd_report(metrics, long_out);
  return kUsageError;
}
