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


#include "fedq/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "fedq/error.hpp"
#include "fedq/server.hpp"
#include "fedq/sslcore.hpp"
#include "json.hpp"

namespace fedq {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kInitStream = 0x1417;

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first failure by
// index is rethrown once all workers have joined.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Vector safe_representability(const Matrix& p) {
  if (!(p.norm() > 0.0)) return Vector::Zero(p.cols());
  return ssl::representability(p);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) raise(ErrorCode::kIoError, "cannot write " + path.string());
  os << text;
  if (!os) raise(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<data::DataShard> load_or_generate_shards(const ExperimentConfig& cfg) {
  std::vector<data::DataShard> shards;
  if (cfg.data.data_dir) {
    data::DataGenParams stored;
    shards = data::read_shard_directory(*cfg.data.data_dir, &stored);
    if (stored.n != cfg.n_clients || stored.d != cfg.d) {
      raise(ErrorCode::kValidationError, "data_dir holds n=" + std::to_string(stored.n) +
                                             ", d=" + std::to_string(stored.d) +
                                             " but the config asks for n=" +
                                             std::to_string(cfg.n_clients) +
                                             ", d=" + std::to_string(cfg.d));
    }
  } else {
    const data::DataGenParams params = cfg.data_params();
    params.validate();
    const int distinct = cfg.data.identical ? 1 : cfg.n_clients;
    for (int k = 1; k <= distinct; ++k) shards.push_back(data::generate_shard(params, k));
  }
  if (cfg.data.identical) {
    shards.resize(1);
    for (int k = 2; k <= cfg.n_clients; ++k) {
      data::DataShard copy = shards.front();
      copy.client_id = k;
      shards.push_back(std::move(copy));
    }
  }
  for (auto& s : shards) data::cached_covariance(s);
  return shards;
}

double default_alpha0(const Matrix& global_cov) {
  const double lmax = analysis::spectral_norm(global_cov);
  if (!(lmax > 0.0)) raise(ErrorCode::kZeroMatrix, "global covariance is zero");
  return 0.05 / lmax;
}

std::vector<Matrix> initial_model(const ExperimentConfig& cfg) {
  Rng rng(derive_seed(cfg.seeds.training, kInitStream));
  const double std = cfg.init_std();
  std::vector<Matrix> layers;
  int in = cfg.d;
  for (int out : cfg.model.layers) {
    Matrix w(out, in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std * rng.normal();
    layers.push_back(std::move(w));
    in = out;
  }
  return layers;
}

client::TrainingOptions training_options(const ExperimentConfig& cfg, int client_index,
                                         double alpha0) {
  client::TrainingOptions o;
  o.bitwidth = cfg.bitwidths.at(static_cast<std::size_t>(client_index));
  o.grad_extra_bits = cfg.grad_extra_bits;
  o.activation = cfg.model.activation;
  o.quantize = true;
  o.quantize_activations = cfg.activations_quantized();
  o.aug_sigma = cfg.aug_sigma;
  o.batch_size = cfg.batch_size;
  o.lr.kind = cfg.lr.kind;
  o.lr.base = alpha0;
  o.lr.constant_within_round = cfg.lr.constant_within_round;
  return o;
}

std::string metrics_header(int n_clients) {
  std::string h = "round,alpha,global_loss,moreau_surrogate";
  for (int k = 1; k <= n_clients; ++k) {
    const std::string s = std::to_string(k);
    h += ",loss_" + s + ",eps_g_" + s + ",eps_w_" + s + ",eps_r_" + s + ",grad_norm_max_" + s;
  }
  for (int k = 1; k <= n_clients; ++k) h += ",repr_" + std::to_string(k);
  return h;
}

std::string metrics_row(const MetricsRecord& r) {
  std::string row = std::to_string(r.round) + "," + format_double(r.alpha) + "," +
                    format_double(r.global_loss) + "," + format_double(r.moreau_surrogate);
  for (std::size_t k = 0; k < r.client_loss.size(); ++k) {
    row += "," + format_double(r.client_loss[k]) + "," + format_double(r.eps_g[k]) + "," +
           format_double(r.eps_w[k]) + "," + format_double(r.eps_r[k]) + "," +
           format_double(r.grad_norm_max[k]);
  }
  for (double v : r.representability) row += "," + format_double(v);
  return row;
}

RunResult run_experiment(const ExperimentConfig& cfg_in, const RunOptions& options) {
  cfg_in.validate();
  RunResult result;
  result.config = cfg_in;
  ExperimentConfig& cfg = result.config;
  const int n = cfg.n_clients;

  std::vector<data::DataShard> shards = load_or_generate_shards(cfg);
  result.global_covariance = data::global_covariance(shards);
  const Matrix& xbar = result.global_covariance;
  result.alpha0 = cfg.lr.base ? *cfg.lr.base : default_alpha0(xbar);
  cfg.lr.base = result.alpha0;
  result.theory = analysis::make_theory_params(xbar);
  result.eckart_young_loss =
      cfg.model.m <= cfg.d ? ssl::eckart_young_loss(xbar, cfg.model.m) : 0.0;

  const int threads = options.threads > 0
                          ? options.threads
                          : std::max(1, std::min<int>(n, static_cast<int>(
                                                             std::thread::hardware_concurrency())));

  const std::vector<Matrix> init = initial_model(cfg);
  std::vector<client::ClientState> clients;
  std::map<int, int> bit_map;
  for (int k = 1; k <= n; ++k) {
    clients.push_back(client::make_client(k, training_options(cfg, k - 1, result.alpha0), init,
                                          derive_seed(cfg.seeds.training, static_cast<std::uint64_t>(k))));
    bit_map.emplace(k, cfg.bitwidths[static_cast<std::size_t>(k - 1)]);
  }
  server::ServerState srv = server::make_server(bit_map, init);
  result.client_stats.resize(static_cast<std::size_t>(n));

  auto global_metrics = [&](MetricsRecord& rec, const std::vector<Matrix>& model) {
    const Matrix p = client::effective_map(model);
    rec.global_loss = ssl::loss(p, xbar);
    rec.moreau_surrogate =
        cfg.metrics.moreau ? analysis::moreau_grad_surrogate(p, xbar, result.theory) : kNaN;
    rec.representability.assign(static_cast<std::size_t>(n), kNaN);
    if (cfg.metrics.representability) {
      const Vector r = safe_representability(p);
      for (int j = 0; j < n; ++j) rec.representability[static_cast<std::size_t>(j)] = r(j);
    }
  };

  result.initial.round = 0;
  result.initial.alpha = result.alpha0;
  global_metrics(result.initial, init);

  const std::filesystem::path out_dir =
      options.out_dir ? *options.out_dir : std::filesystem::path(cfg.output_dir);
  std::ofstream metrics_os;
  std::ofstream timing_os;
  if (options.write_files) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) raise(ErrorCode::kIoError, "cannot create " + out_dir.string() + ": " + ec.message());
    write_text(out_dir / "config.json", config_to_json(cfg) + "\n");
    metrics_os.open(out_dir / "metrics.csv", std::ios::trunc | std::ios::binary);
    timing_os.open(out_dir / "timing.csv", std::ios::trunc | std::ios::binary);
    if (!metrics_os || !timing_os) raise(ErrorCode::kIoError, "cannot open metrics files");
    metrics_os << metrics_header(n) << '\n' << std::flush;
    timing_os << "round,wall_ms\n" << std::flush;
  }

  for (int t = 1; t <= cfg.rounds; ++t) {
    if (options.on_round) options.on_round(t);
    const auto start = std::chrono::steady_clock::now();

    std::vector<client::QuantErrorStats> round_stats(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
      round_stats[i] = client::run_local_epochs(clients[i], shards[i], cfg.local_epochs);
    });

    MetricsRecord rec;
    rec.round = t;
    rec.alpha = round_stats.front().steps.front().alpha;
    std::vector<server::ClientReport> reports;
    for (std::size_t i = 0; i < clients.size(); ++i) {
      const client::QuantErrorStats& st = round_stats[i];
      result.client_stats[i].append(st);
      const std::vector<Matrix> local = clients[i].dense_model();
      rec.client_loss.push_back(
          ssl::loss(client::effective_map(local), *shards[i].covariance_cache));
      rec.eps_g.push_back(st.mean_grad_error());
      rec.eps_w.push_back(st.mean_weight_error());
      rec.grad_norm_max.push_back(st.max_grad_norm());
      reports.push_back({clients[i].client_id, clients[i].quantized_model(),
                         static_cast<std::uint64_t>(shards[i].size())});
    }

    std::map<int, server::QuantizedModel> back =
        server::run_round(srv, std::move(reports), cfg.seeds.training);
    rec.eps_r = srv.requant_error_log.back();
    result.requant_errors.push_back(rec.eps_r);
    for (auto& c : clients) client::assign_model(c, std::move(back.at(c.client_id)));
    global_metrics(rec, srv.global_model);

    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            start)
                      .count();
    if (options.write_files) {
      metrics_os << metrics_row(rec) << '\n' << std::flush;
      timing_os << t << ',' << format_double(rec.wall_ms) << '\n' << std::flush;
      if (!metrics_os) raise(ErrorCode::kIoError, "metrics write failed");
    }
    result.records.push_back(std::move(rec));
  }
  result.global_model = srv.global_model;

  if (options.write_files) {
    nlohmann::ordered_json s;
    s["rounds"] = cfg.rounds;
    s["alpha0"] = result.alpha0;
    s["rho"] = result.theory.rho;
    s["rho_bar"] = result.theory.rho_bar;
    s["eckart_young_loss"] = result.eckart_young_loss;
    s["initial"]["global_loss"] = result.initial.global_loss;
    s["initial"]["moreau_surrogate"] = result.initial.moreau_surrogate;
    s["initial"]["representability"] = result.initial.representability;
    s["final"]["global_loss"] = result.records.back().global_loss;
    s["final"]["moreau_surrogate"] = result.records.back().moreau_surrogate;
    if (cfg.metrics.moreau) {
      const SurrogateSummary ss = surrogate_summary(result);
      s["G"] = ss.G;
      s["G_q"] = ss.G_q;
      s["phi0"] = ss.phi0;
      s["phi_min"] = ss.phi_min;
      s["approximate_bound"] = ss.rhs;
      s["weighted_surrogate_sq"] = ss.running_average.back();
    }
    write_text(out_dir / "summary.json", s.dump(2) + "\n");
  }
  return result;
}

SurrogateSummary surrogate_summary(const RunResult& result) {
  const ExperimentConfig& cfg = result.config;
  if (!cfg.metrics.moreau) raise(ErrorCode::kInvalidArgument, "run has no surrogate metrics");
  if (result.records.empty()) raise(ErrorCode::kEmptyInput, "run has no rounds");
  SurrogateSummary out;
  out.surrogates.push_back(result.initial.moreau_surrogate);
  for (std::size_t t = 0; t < result.records.size(); ++t) {
    out.alphas.push_back(result.records[t].alpha);
    if (t + 1 < result.records.size()) out.surrogates.push_back(result.records[t].moreau_surrogate);
  }
  out.running_average = analysis::weighted_running_average(out.alphas, out.surrogates);

  std::vector<analysis::ErrorSample> samples;
  for (const auto& st : result.client_stats) {
    out.G = std::max(out.G, st.max_grad_norm());
    const auto w = analysis::weight_error_samples(st);
    samples.insert(samples.end(), w.begin(), w.end());
  }
  for (std::size_t t = 0; t < result.requant_errors.size(); ++t) {
    for (double e : result.requant_errors[t]) samples.push_back({e, result.records[t].alpha});
  }
  out.G_q = analysis::gq_estimate(samples);

  analysis::TheoryParams tp = result.theory;
  tp.G = out.G;
  tp.G_q = out.G_q;
  const Matrix& xbar = result.global_covariance;
  out.phi0 = analysis::moreau_envelope(client::effective_map(initial_model(cfg)), xbar, tp);
  out.phi_min = analysis::moreau_envelope(
      ssl::closed_form_optimum(xbar, std::min(cfg.model.m, cfg.d)), xbar, tp);
  out.rhs = analysis::theorem1_rhs(tp, out.alphas, cfg.local_epochs, out.phi0, out.phi_min);
  return out;
}

std::string oracle_report(const ExperimentConfig& cfg) {
  std::vector<data::DataShard> shards = load_or_generate_shards(cfg);
  const Matrix xbar = data::global_covariance(shards);
  const int m = std::min(cfg.model.m, cfg.d);
  std::ostringstream os;
  auto section = [&](const std::string& name, const Matrix& X) {
    const ssl::EigenDecomposition eig = ssl::sym_eig(X);
    const Matrix w = ssl::closed_form_optimum(X, m);
    double trailing = 0.0;
    for (Eigen::Index i = m; i < eig.values.size(); ++i) trailing += eig.values(i) * eig.values(i);
    os << name << '\n';
    os << "  eigenvalues:";
    for (Eigen::Index i = 0; i < eig.values.size(); ++i) os << ' ' << format_double(eig.values(i));
    os << '\n';
    os << "  eckart_young_loss: " << format_double(ssl::eckart_young_loss(X, m)) << '\n';
    os << "  loss_at_optimum: " << format_double(ssl::loss(w, X)) << '\n';
    os << "  trailing_eigenvalue_sq_sum: " << format_double(trailing) << '\n';
    os << "  representability:";
    const Vector r = ssl::representability(w);
    for (int j = 0; j < cfg.n_clients; ++j) os << ' ' << format_double(r(j));
    os << '\n';
  };
  os << "d=" << cfg.d << " n=" << cfg.n_clients << " m=" << m << '\n';
  section("global", xbar);
  for (const auto& s : shards) {
    section("client " + std::to_string(s.client_id), *s.covariance_cache);
  }
  return os.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

ReportOutput report_metrics(const std::filesystem::path& metrics_csv) {
  std::ifstream is(metrics_csv);
  if (!is) raise(ErrorCode::kIoError, "cannot read " + metrics_csv.string());
  std::string line;
  if (!std::getline(is, line)) raise(ErrorCode::kParseError, "metrics file is empty");
  const std::vector<std::string> header = split_csv(line);
  if (header.size() < 4 || header[0] != "round") {
    raise(ErrorCode::kParseError, "line 1: not a metrics header");
  }
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != header.size()) {
      raise(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) + " fields");
    }
    std::vector<double> values;
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (end == c.c_str() || *end != '\0') {
        raise(ErrorCode::kParseError,
              "line " + std::to_string(line_no) + ": bad number '" + c + "'");
      }
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) raise(ErrorCode::kEmptyInput, "metrics file has no rows");

  ReportOutput out;
  std::ostringstream lc;
  lc << "round,metric,value\n";
  for (const auto& r : rows) {
    for (std::size_t c = 1; c < header.size(); ++c) {
      lc << static_cast<long>(r[0]) << ',' << header[c] << ',' << format_double(r[c]) << '\n';
    }
  }
  out.long_csv = lc.str();

  auto column = [&](const std::string& name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  std::ostringstream sm;
  sm << "rounds: " << rows.size() << '\n';
  const std::ptrdiff_t gl = column("global_loss");
  if (gl >= 0) {
    double best = rows.front()[gl];
    for (const auto& r : rows) best = std::min(best, r[gl]);
    sm << "global_loss: first " << format_double(rows.front()[gl]) << ", last "
       << format_double(rows.back()[gl]) << ", min " << format_double(best) << '\n';
  }
  const std::ptrdiff_t ms = column("moreau_surrogate");
  if (ms >= 0) {
    sm << "moreau_surrogate: first " << format_double(rows.front()[ms]) << ", last "
       << format_double(rows.back()[ms]) << '\n';
  }
  for (int k = 1;; ++k) {
    const std::string s = std::to_string(k);
    const std::ptrdiff_t ew = column("eps_w_" + s);
    if (ew < 0) break;
    const std::ptrdiff_t eg = column("eps_g_" + s);
    const std::ptrdiff_t er = column("eps_r_" + s);
    double mw = 0.0;
    double mg = 0.0;
    double mr = 0.0;
    for (const auto& r : rows) {
      mw += r[ew];
      mg += eg >= 0 ? r[eg] : 0.0;
      mr += er >= 0 ? r[er] : 0.0;
    }
    const double cnt = static_cast<double>(rows.size());
    sm << "client " << k << ": mean eps_g " << format_double(mg / cnt) << ", mean eps_w "
       << format_double(mw / cnt) << ", mean eps_r " << format_double(mr / cnt) << '\n';
  }
  out.summary = sm.str();
  return out;
}

}  // namespace fedq
