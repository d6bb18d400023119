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

// The linear self-supervised objective and its spectral solution.
//
// A feature matrix w (m x d) embeds x as w x. The tractable objective is
// L(w) = ||X - w^T w||_F^2 for a data covariance X, minimized by the top-m
// eigenpairs of X.

#pragma once

#include "fedq/linalg.hpp"
#include "fedq/rng.hpp"

namespace fedq::ssl {

/// ||X - w^T w||_F^2.
double loss(const Matrix& w, const Matrix& X);

/// Gradient of loss(): 4 w (w^T w - X).
Matrix grad(const Matrix& w, const Matrix& X);

/// Gradient of the minibatch objective
///   -(1/B) sum_i (w x_i + xi_i)^T (w x_i + xi'_i) + 1/2 ||w^T w||_F^2
/// with xi, xi' ~ N(0, aug_sigma^2 I_m). For each sample the m entries of xi
/// are drawn before the m entries of xi'. No draws happen when aug_sigma is 0.
Matrix stochastic_grad(const Matrix& w, const Matrix& batch, double aug_sigma, Rng& rng);

/// d/da of the contrastive term above with respect to the activations
/// a = batch * w^T (B x m): -(1/B) (2 a_i + xi_i + xi'_i). Same draw order.
Matrix contrastive_activation_grad(const Matrix& activations, double aug_sigma, Rng& rng);

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // columns are orthonormal eigenvectors
};

struct EigOptions {
  int max_sweeps = 100;
  double tolerance = 1e-15;  // relative off-diagonal Frobenius norm
};

/// Cyclic Jacobi. Each eigenvector's largest-magnitude component is positive.
/// Throws kNotSymmetric (asymmetry above 1e-9) or kNoConvergence.
EigenDecomposition sym_eig(const Matrix& X, const EigOptions& options = {});

/// Rows sqrt(lambda_i) v_i^T for the top-m eigenpairs. Small negative
/// eigenvalues (>= -1e-9) clamp to zero; anything lower raises
/// kNegativeEigenvalue.
Matrix closed_form_optimum(const Matrix& X, int m);

/// sum_{i > m} lambda_i^2, the loss of the closed-form optimum.
double eckart_young_loss(const Matrix& X, int m);

/// r_i = ||Pi_S(e_i)||^2 for the row space S of w. Rows are orthonormalized
/// by Gram-Schmidt; rows with residual below 1e-10 ||w||_F are dropped.
Vector representability(const Matrix& w);

/// Dimension of the row space under the same tolerance.
int row_space_rank(const Matrix& w);

}  // namespace fedq::ssl
