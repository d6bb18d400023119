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

// Numerical diagnostics for the convergence and representability theory.
//
// The objective L(w) = ||X - w^T w||^2 is rho-weakly convex near the region
// training visits, with rho >= 4 ||X||_2. For rho_bar > rho the Moreau
// envelope phi(w) = min_y L(y) + rho_bar/2 ||y - w||^2 is smooth and
// ||grad phi(w)|| = rho_bar ||w - prox(w)|| measures near-stationarity.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "fedq/client.hpp"
#include "fedq/datagen.hpp"
#include "fedq/linalg.hpp"
#include "fedq/rng.hpp"

namespace fedq::analysis {

struct TheoryParams {
  double rho = 0.0;
  double rho_bar = 0.0;
  double G = 0.0;
  double G_q = 0.0;
  int inner_iters = 20000;
  double inner_tol = 1e-12;

  /// Throws kInvalidParams unless rho_bar > rho > 0 and the rest is sane.
  void validate() const;
};

/// ||X||_2 by power iteration on X^T X.
double spectral_norm(const Matrix& X, int max_iters = 100, double tol = 1e-10);

/// rho = 4 ||X||_2 (1 + margin), rho_bar = rho_bar_factor * rho.
TheoryParams make_theory_params(const Matrix& X, double margin = 0.01,
                                double rho_bar_factor = 2.0);

struct ProxResult {
  Matrix point;       // y_hat
  double value = 0.0; // phi(w)
  int iterations = 0;
};

/// Gradient descent on L(y) + rho_bar/2 ||y - w||^2 from y = w. A step that
/// raises the objective is rejected and the step halved; ten rejections in a
/// row raise kNoConvergence.
ProxResult moreau_prox(const Matrix& w, const Matrix& X, const TheoryParams& tp);

/// rho_bar ||w - prox(w)||.
double moreau_grad_surrogate(const Matrix& w, const Matrix& X, const TheoryParams& tp);

/// phi(w).
double moreau_envelope(const Matrix& w, const Matrix& X, const TheoryParams& tp);

/// E rho_bar / (rho_bar - rho) * [phi0 - phi_min + rho_bar (G^2 sum a^2 + 3 G_q^2 sum a)]
///   / (rho_bar sum a), with one alpha per round.
double theorem1_rhs(const TheoryParams& tp, std::span<const double> alphas, int E, double phi0,
                    double phi_min);

/// Alpha-weighted running average of surrogate^2: entry t is
/// sum_{s<=t} a_s S_s^2 / sum_{s<=t} a_s.
std::vector<double> weighted_running_average(std::span<const double> alphas,
                                             std::span<const double> surrogates);

struct ErrorSample {
  double error = 0.0;  // ||eps||^2
  double alpha = 0.0;
};

/// Smallest G_q with error <= alpha G_q^2 on at least `coverage` of samples.
double gq_estimate(std::span<const ErrorSample> samples, double coverage = 0.99);

/// Weight-error samples of a client stats stream.
std::vector<ErrorSample> weight_error_samples(const client::QuantErrorStats& stats);

/// (X_jj + 2 (w e_j).(eps e_j) + ||eps e_j||^2) / (lambda_1(X) + ||2 w^T eps + eps^T eps||_F)
/// for 1-based coordinate j.
double representability_lower_bound(const Matrix& X, const Matrix& w_opt, const Matrix& eps,
                                    int j);

struct RepresentabilityRow {
  std::string scope;  // "global" or "client k"
  int coordinate = 0;
  double value = 0.0;  // r_j(w* + eps)
  double bound = 0.0;
};

/// For each client covariance and the global one: w* = closed_form_optimum,
/// eps Gaussian with ||eps|| = eps_scale ||w*||, report r_j and its bound
/// for j = 1..n.
std::vector<RepresentabilityRow> local_vs_global_representability_report(
    std::span<const data::DataShard> shards, int m, double eps_scale, Rng& rng);

std::string format_representability_report(std::span<const RepresentabilityRow> rows);

/// Least-squares slope of y against x.
double fit_slope(std::span<const double> x, std::span<const double> y);

}  // namespace fedq::analysis
