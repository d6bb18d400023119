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


#include "fedq/fedq.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <new>
#include <string>
#include <vector>

#include "fedq/config.hpp"
#include "fedq/datagen.hpp"
#include "fedq/error.hpp"
#include "fedq/experiment.hpp"
#include "fedq/probes.hpp"

struct fedq_config {
  fedq::ExperimentConfig cfg;
};

struct fedq_run_result {
  fedq::RunResult result;
};

namespace {

thread_local std::string g_last_error;

fedq_status status_of(fedq::ErrorCode code) {
  using fedq::ErrorCode;
  switch (code) {
    case ErrorCode::kParseError:
      return FEDQ_PARSE;
    case ErrorCode::kValidationError:
    case ErrorCode::kInvalidParams:
      return FEDQ_VALIDATION;
    case ErrorCode::kIoError:
      return FEDQ_IO;
    case ErrorCode::kDegenerateRange:
    case ErrorCode::kNotSymmetric:
    case ErrorCode::kNoConvergence:
    case ErrorCode::kNegativeEigenvalue:
    case ErrorCode::kZeroMatrix:
      return FEDQ_NUMERIC;
    default:
      return FEDQ_INVALID_ARGUMENT;
  }
}

template <typename Fn>
fedq_status guard(Fn fn) {
  try {
    fn();
    g_last_error.clear();
    return FEDQ_OK;
  } catch (const fedq::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FEDQ_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FEDQ_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return FEDQ_INTERNAL;
  }
}

fedq_status null_arg(const char* what) {
  g_last_error = std::string("InvalidArgument: ") + what + " is NULL";
  return FEDQ_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* fedq_version(void) { return "0.1.0"; }

const char* fedq_status_string(fedq_status status) {
  switch (status) {
    case FEDQ_OK: return "ok";
    case FEDQ_INVALID_ARGUMENT: return "invalid argument";
    case FEDQ_PARSE: return "parse error";
    case FEDQ_VALIDATION: return "validation error";
    case FEDQ_IO: return "i/o error";
    case FEDQ_NUMERIC: return "numeric error";
    case FEDQ_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* fedq_last_error(void) { return g_last_error.c_str(); }

void fedq_string_free(char* s) { std::free(s); }

fedq_status fedq_config_load(const char* path, fedq_config** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guard([&] { *out = new fedq_config{fedq::load_config(path)}; });
}

fedq_status fedq_config_from_json(const char* json, fedq_config** out) {
  if (!json) return null_arg("json");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guard([&] { *out = new fedq_config{fedq::parse_config(json)}; });
}

fedq_status fedq_config_to_json(const fedq_config* cfg, char** out) {
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guard([&] { *out = dup_string(fedq::config_to_json(cfg->cfg)); });
}

void fedq_config_free(fedq_config* cfg) { delete cfg; }

fedq_status fedq_run(const fedq_config* cfg, const char* out_dir, int threads,
                     fedq_run_result** result) {
  if (!cfg) return null_arg("cfg");
  if (threads < 0) {
    g_last_error = "InvalidArgument: threads must be >= 0";
    return FEDQ_INVALID_ARGUMENT;
  }
  if (result) *result = nullptr;
  return guard([&] {
    fedq::RunOptions opts;
    if (out_dir) opts.out_dir = out_dir;
    opts.threads = threads;
    fedq::RunResult r = fedq::run_experiment(cfg->cfg, opts);
    if (result) *result = new fedq_run_result{std::move(r)};
  });
}

int fedq_run_result_rounds(const fedq_run_result* r) {
  return r ? static_cast<int>(r->result.records.size()) : 0;
}

namespace {

const fedq::MetricsRecord* record_at(const fedq_run_result* r, int round) {
  if (!r || round < 0 || round > static_cast<int>(r->result.records.size())) return nullptr;
  return round == 0 ? &r->result.initial : &r->result.records[static_cast<std::size_t>(round - 1)];
}

}  // namespace

double fedq_run_result_global_loss(const fedq_run_result* r, int round) {
  const auto* rec = record_at(r, round);
  return rec ? rec->global_loss : std::numeric_limits<double>::quiet_NaN();
}

double fedq_run_result_moreau_surrogate(const fedq_run_result* r, int round) {
  const auto* rec = record_at(r, round);
  return rec ? rec->moreau_surrogate : std::numeric_limits<double>::quiet_NaN();
}

double fedq_run_result_eckart_young_loss(const fedq_run_result* r) {
  return r ? r->result.eckart_young_loss : std::numeric_limits<double>::quiet_NaN();
}

void fedq_run_result_free(fedq_run_result* r) { delete r; }

fedq_status fedq_datagen(const fedq_config* cfg, const char* out_dir) {
  if (!cfg) return null_arg("cfg");
  if (!out_dir) return null_arg("out_dir");
  return guard([&] {
    const fedq::data::DataGenParams params = cfg->cfg.data_params();
    params.validate();
    std::vector<fedq::data::DataShard> shards;
    for (int k = 1; k <= params.n; ++k) shards.push_back(fedq::data::generate_shard(params, k));
    fedq::data::write_shard_directory(params, shards, out_dir);
  });
}

fedq_status fedq_quantprobe(const int* rates, size_t n_rates, uint64_t samples, uint64_t seed,
                            const char* out_csv, double* out_mse) {
  if (!rates) return null_arg("rates");
  return guard([&] {
    const std::vector<int> rs(rates, rates + n_rates);
    const auto rows = fedq::analysis::quant_rate_probe(rs, static_cast<std::size_t>(samples), seed);
    if (out_csv) {
      std::ofstream os(out_csv, std::ios::trunc | std::ios::binary);
      if (!os) fedq::raise(fedq::ErrorCode::kIoError, std::string("cannot write ") + out_csv);
      os << "rate,mse\n";
      for (const auto& r : rows) os << r.rate << ',' << fedq::format_double(r.mse) << '\n';
      if (!os) fedq::raise(fedq::ErrorCode::kIoError, std::string("write failed for ") + out_csv);
    }
    if (out_mse) {
      for (std::size_t i = 0; i < rows.size(); ++i) out_mse[i] = rows[i].mse;
    }
  });
}

fedq_status fedq_oracle(const fedq_config* cfg, char** report) {
  if (!cfg) return null_arg("cfg");
  if (!report) return null_arg("report");
  *report = nullptr;
  return guard([&] { *report = dup_string(fedq::oracle_report(cfg->cfg)); });
}

fedq_status fedq_report(const char* metrics_csv, const char* long_out, char** summary) {
  if (!metrics_csv) return null_arg("metrics_csv");
  if (summary) *summary = nullptr;
  return guard([&] {
    const fedq::ReportOutput out = fedq::report_metrics(metrics_csv);
    if (long_out) {
      std::ofstream os(long_out, std::ios::trunc | std::ios::binary);
      if (!os) fedq::raise(fedq::ErrorCode::kIoError, std::string("cannot write ") + long_out);
      os << out.long_csv;
    }
    if (summary) *summary = dup_string(out.summary);
  });
}

}  // extern "C"
