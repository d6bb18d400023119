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

#include "fedq/sslcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fedq/error.hpp"

namespace fedq::ssl {
namespace {

void check_dims(const Matrix& w, const Matrix& X) {
  if (X.rows() != X.cols()) raise(ErrorCode::kDimensionMismatch, "covariance is not square");
  if (w.cols() != X.rows()) {
    raise(ErrorCode::kDimensionMismatch,
          "feature matrix has " + std::to_string(w.cols()) + " columns, covariance is " +
              std::to_string(X.rows()) + "x" + std::to_string(X.cols()));
  }
}

// Orthonormal basis of the row space, one basis vector per row of the result.
Matrix row_space_basis(const Matrix& w) {
  const double norm = w.norm();
  if (!(norm > 0.0)) raise(ErrorCode::kZeroMatrix, "feature matrix is zero");
  const double tol = 1e-10 * norm;
  std::vector<Vector> basis;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    Vector v = w.row(i).transpose();
    // Two passes of modified Gram-Schmidt keep the basis orthonormal to
    // working precision.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) v -= b.dot(v) * b;
    }
    const double r = v.norm();
    if (r > tol) basis.push_back(v / r);
  }
  if (basis.empty()) raise(ErrorCode::kZeroMatrix, "feature matrix has empty row space");
  Matrix out(static_cast<Eigen::Index>(basis.size()), w.cols());
  for (std::size_t i = 0; i < basis.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = basis[i].transpose();
  }
  return out;
}

}  // namespace

double loss(const Matrix& w, const Matrix& X) {
  check_dims(w, X);
  return (X - w.transpose() * w).squaredNorm();
}

Matrix grad(const Matrix& w, const Matrix& X) {
  check_dims(w, X);
  return 4.0 * w * (w.transpose() * w - X);
}

Matrix stochastic_grad(const Matrix& w, const Matrix& batch, double aug_sigma, Rng& rng) {
  if (batch.rows() == 0) raise(ErrorCode::kEmptyInput, "empty batch");
  if (batch.cols() != w.cols()) raise(ErrorCode::kDimensionMismatch, "batch width != d");
  const Eigen::Index m = w.rows();
  const double inv_b = 1.0 / static_cast<double>(batch.rows());
  Matrix g = 2.0 * w * (w.transpose() * w);
  Vector xi(m);
  Vector xi2(m);
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    const Vector x = batch.row(i).transpose();
    const Vector a = w * x;
    xi.setZero();
    xi2.setZero();
    if (aug_sigma > 0.0) {
      for (Eigen::Index j = 0; j < m; ++j) xi(j) = aug_sigma * rng.normal();
      for (Eigen::Index j = 0; j < m; ++j) xi2(j) = aug_sigma * rng.normal();
    }
    // d/dw of -(a + xi)^T (a + xi') with a = w x.
    g -= inv_b * (2.0 * a + xi + xi2) * x.transpose();
  }
  return g;
}

Matrix contrastive_activation_grad(const Matrix& activations, double aug_sigma, Rng& rng) {
  if (activations.rows() == 0) raise(ErrorCode::kEmptyInput, "empty batch");
  const Eigen::Index m = activations.cols();
  const double inv_b = 1.0 / static_cast<double>(activations.rows());
  Matrix g = -2.0 * inv_b * activations;
  if (aug_sigma > 0.0) {
    for (Eigen::Index i = 0; i < activations.rows(); ++i) {
      for (Eigen::Index j = 0; j < m; ++j) g(i, j) -= inv_b * aug_sigma * rng.normal();
      for (Eigen::Index j = 0; j < m; ++j) g(i, j) -= inv_b * aug_sigma * rng.normal();
    }
  }
  return g;
}

EigenDecomposition sym_eig(const Matrix& X, const EigOptions& options) {
  if (X.rows() != X.cols()) raise(ErrorCode::kDimensionMismatch, "matrix is not square");
  const Eigen::Index n = X.rows();
  const double scale = std::max(1.0, X.cwiseAbs().maxCoeff());
  if ((X - X.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    raise(ErrorCode::kNotSymmetric, "matrix is not symmetric within 1e-9");
  }
  Matrix a = 0.5 * (X + X.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double frob = a.norm();

  auto off_diagonal = [&]() {
    double s = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
    return std::sqrt(s);
  };

  bool converged = n < 2 || frob == 0.0;
  for (int sweep = 0; !converged && sweep < options.max_sweeps; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal() <= options.tolerance * frob;
  }
  if (!converged) raise(ErrorCode::kNoConvergence, "Jacobi sweeps exhausted");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    out.values(i) = a(src, src);
    Vector col = v.col(src);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0.0) col = -col;
    out.vectors.col(i) = col;
  }
  return out;
}

Matrix closed_form_optimum(const Matrix& X, int m) {
  if (m < 1 || m > X.rows()) {
    raise(ErrorCode::kInvalidArgument, "rank m must lie in [1, d]");
  }
  const EigenDecomposition eig = sym_eig(X);
  Matrix w(m, X.cols());
  for (int i = 0; i < m; ++i) {
    double lambda = eig.values(i);
    if (lambda < -1e-9) {
      raise(ErrorCode::kNegativeEigenvalue,
            "eigenvalue " + std::to_string(i) + " is " + std::to_string(lambda));
    }
    lambda = std::max(lambda, 0.0);
    w.row(i) = std::sqrt(lambda) * eig.vectors.col(i).transpose();
  }
  return w;
}

double eckart_young_loss(const Matrix& X, int m) {
  const EigenDecomposition eig = sym_eig(X);
  double s = 0.0;
  for (Eigen::Index i = m; i < eig.values.size(); ++i) s += eig.values(i) * eig.values(i);
  return s;
}

Vector representability(const Matrix& w) {
  const Matrix basis = row_space_basis(w);
  return basis.colwise().squaredNorm().transpose();
}

int row_space_rank(const Matrix& w) { return static_cast<int>(row_space_basis(w).rows()); }

}  // namespace fedq::ssl
