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


#include "fedq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fedq/error.hpp"
#include "fedq/sslcore.hpp"

namespace fedq::analysis {

void TheoryParams::validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho)) raise(ErrorCode::kInvalidParams, "rho must be positive");
  if (!(rho_bar > rho) || !std::isfinite(rho_bar)) {
    raise(ErrorCode::kInvalidParams, "rho_bar must exceed rho");
  }
  if (!(G >= 0.0) || !(G_q >= 0.0)) raise(ErrorCode::kInvalidParams, "G and G_q must be >= 0");
  if (inner_iters < 1 || !(inner_tol > 0.0)) {
    raise(ErrorCode::kInvalidParams, "inner solver settings must be positive");
  }
}

double spectral_norm(const Matrix& X, int max_iters, double tol) {
  if (X.size() == 0) raise(ErrorCode::kEmptyInput, "empty matrix");
  const Matrix A = X.transpose() * X;
  Vector v(A.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = 1.0 + 0.1 * static_cast<double>(i) / static_cast<double>(v.size());
  }
  v.normalize();
  double sigma2 = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector next = A * v;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    const double prev = sigma2;
    sigma2 = next.dot(A * next);
    v = std::move(next);
    if (it > 0 && std::abs(sigma2 - prev) <= tol * std::max(sigma2, 1e-300)) break;
  }
  return std::sqrt(std::max(sigma2, 0.0));
}

TheoryParams make_theory_params(const Matrix& X, double margin, double rho_bar_factor) {
  if (!(margin >= 0.0) || !(rho_bar_factor > 1.0)) {
    raise(ErrorCode::kInvalidParams, "margin must be >= 0 and rho_bar_factor > 1");
  }
  const double norm = spectral_norm(X);
  if (!(norm > 0.0)) raise(ErrorCode::kZeroMatrix, "covariance is zero");
  TheoryParams tp;
  tp.rho = 4.0 * norm * (1.0 + margin);
  tp.rho_bar = rho_bar_factor * tp.rho;
  return tp;
}

ProxResult moreau_prox(const Matrix& w, const Matrix& X, const TheoryParams& tp) {
  tp.validate();
  const double lambda1 = spectral_norm(X);
  auto objective = [&](const Matrix& y) {
    return ssl::loss(y, X) + 0.5 * tp.rho_bar * (y - w).squaredNorm();
  };
  double step = 1.0 / (tp.rho_bar + 16.0 * std::max(lambda1, w.squaredNorm()));
  const double scale = std::max(1.0, w.norm());

  ProxResult out{w, objective(w), 0};
  int rejected = 0;
  for (int it = 0; it < tp.inner_iters; ++it) {
    const Matrix g = ssl::grad(out.point, X) + tp.rho_bar * (out.point - w);
    const Matrix next = out.point - step * g;
    if (step * g.norm() <= tp.inner_tol * scale) break;
    const double value = objective(next);
    if (!(value <= out.value)) {
      // A rise at the rounding floor of the objective means we have converged
      // to working precision.
      const double floor = 64.0 * std::numeric_limits<double>::epsilon() *
                           std::max(1.0, std::abs(out.value));
      if (value - out.value <= floor) break;
      if (++rejected >= 10) {
        raise(ErrorCode::kNoConvergence, "prox objective rose on 10 consecutive steps");
      }
      step *= 0.5;
      continue;
    }
    rejected = 0;
    out.point = next;
    out.value = value;
    out.iterations = it + 1;
  }
  return out;
}

double moreau_grad_surrogate(const Matrix& w, const Matrix& X, const TheoryParams& tp) {
  return tp.rho_bar * (w - moreau_prox(w, X, tp).point).norm();
}

double moreau_envelope(const Matrix& w, const Matrix& X, const TheoryParams& tp) {
  return moreau_prox(w, X, tp).value;
}

double theorem1_rhs(const TheoryParams& tp, std::span<const double> alphas, int E, double phi0,
                    double phi_min) {
  tp.validate();
  if (alphas.empty()) raise(ErrorCode::kInvalidParams, "empty step-size schedule");
  if (E < 1) raise(ErrorCode::kInvalidParams, "E must be >= 1");
  if (!(phi0 >= phi_min - 1e-12 * std::max(1.0, std::abs(phi_min)))) {
    raise(ErrorCode::kInvalidParams, "phi0 is below phi_min");
  }
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double a : alphas) {
    if (!(a > 0.0)) raise(ErrorCode::kInvalidParams, "step sizes must be positive");
    sum += a;
    sum_sq += a * a;
  }
  const double gap = std::max(phi0 - phi_min, 0.0);
  const double noise = tp.rho_bar * (tp.G * tp.G * sum_sq + 3.0 * tp.G_q * tp.G_q * sum);
  return (E * tp.rho_bar / (tp.rho_bar - tp.rho)) * (gap + noise) / (tp.rho_bar * sum);
}

std::vector<double> weighted_running_average(std::span<const double> alphas,
                                             std::span<const double> surrogates) {
  if (alphas.size() != surrogates.size()) {
    raise(ErrorCode::kDimensionMismatch, "one step size per surrogate value is required");
  }
  std::vector<double> out;
  out.reserve(alphas.size());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    num += alphas[i] * surrogates[i] * surrogates[i];
    den += alphas[i];
    out.push_back(den > 0.0 ? num / den : 0.0);
  }
  return out;
}

double gq_estimate(std::span<const ErrorSample> samples, double coverage) {
  if (samples.empty()) raise(ErrorCode::kEmptyInput, "no error samples");
  if (!(coverage > 0.0 && coverage <= 1.0)) {
    raise(ErrorCode::kInvalidArgument, "coverage must lie in (0, 1]");
  }
  std::vector<double> ratios;
  ratios.reserve(samples.size());
  for (const auto& s : samples) {
    if (!(s.alpha > 0.0)) raise(ErrorCode::kInvalidArgument, "step sizes must be positive");
    ratios.push_back(std::max(s.error, 0.0) / s.alpha);
  }
  std::sort(ratios.begin(), ratios.end());
  // Smallest order statistic that covers the requested fraction.
  const auto need = static_cast<std::size_t>(
      std::ceil(coverage * static_cast<double>(ratios.size()) - 1e-9));
  const std::size_t idx = std::clamp<std::size_t>(need, 1, ratios.size()) - 1;
  return std::sqrt(ratios[idx]);
}

std::vector<ErrorSample> weight_error_samples(const client::QuantErrorStats& stats) {
  std::vector<ErrorSample> out;
  out.reserve(stats.steps.size());
  for (const auto& st : stats.steps) out.push_back({st.weight_error, st.alpha});
  return out;
}

double representability_lower_bound(const Matrix& X, const Matrix& w_opt, const Matrix& eps,
                                    int j) {
  if (X.rows() != X.cols()) raise(ErrorCode::kDimensionMismatch, "covariance is not square");
  if (w_opt.cols() != X.cols() || eps.rows() != w_opt.rows() || eps.cols() != w_opt.cols()) {
    raise(ErrorCode::kDimensionMismatch, "w*, eps and X disagree in shape");
  }
  if (j < 1 || j > X.rows()) {
    raise(ErrorCode::kInvalidCoordinate, "coordinate " + std::to_string(j) + " outside [1, d]");
  }
  const Eigen::Index c = j - 1;
  const double numerator =
      X(c, c) + 2.0 * w_opt.col(c).dot(eps.col(c)) + eps.col(c).squaredNorm();
  const double lambda1 = ssl::sym_eig(X).values(0);
  const Matrix pert = 2.0 * w_opt.transpose() * eps + eps.transpose() * eps;
  return numerator / (lambda1 + pert.norm());
}

namespace {

void report_scope(const std::string& scope, const Matrix& X, int m, int n, double eps_scale,
                  Rng& rng, std::vector<RepresentabilityRow>& rows) {
  const Matrix w = ssl::closed_form_optimum(X, m);
  Matrix eps = Matrix::Zero(w.rows(), w.cols());
  if (eps_scale > 0.0) {
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
    eps *= eps_scale * w.norm() / eps.norm();
  }
  const Vector r = ssl::representability(w + eps);
  for (int j = 1; j <= n; ++j) {
    rows.push_back({scope, j, r(j - 1), representability_lower_bound(X, w, eps, j)});
  }
}

}  // namespace

std::vector<RepresentabilityRow> local_vs_global_representability_report(
    std::span<const data::DataShard> shards, int m, double eps_scale, Rng& rng) {
  if (shards.empty()) raise(ErrorCode::kEmptyInput, "no shards");
  const int n = static_cast<int>(shards.size());
  std::vector<RepresentabilityRow> rows;
  for (const auto& s : shards) {
    const Matrix X = s.covariance_cache ? *s.covariance_cache : data::empirical_covariance(s);
    report_scope("client " + std::to_string(s.client_id), X, m, n, eps_scale, rng, rows);
  }
  report_scope("global", data::global_covariance(shards), m, n, eps_scale, rng, rows);
  return rows;
}

std::string format_representability_report(std::span<const RepresentabilityRow> rows) {
  std::ostringstream os;
  os << "scope       j  r_j           bound\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-10s %2d  %.10f  %.10f\n", r.scope.c_str(), r.coordinate,
                  r.value, r.bound);
    os << line;
  }
  return os.str();
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    raise(ErrorCode::kInvalidArgument, "slope fit needs at least two paired points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) raise(ErrorCode::kInvalidArgument, "x values are all equal");
  return sxy / sxx;
}

}  // namespace fedq::analysis
