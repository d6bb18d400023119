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

// Scalar codebooks and stochastic (de)quantization.
//
// A codebook holds K = 2^rate sorted centers. Three constructions are
// provided: uniform (identity compander), tanh-companded and empirical
// quantile. Quantization is stochastic rounding between the two neighbouring
// centers, which is unbiased for inputs inside [c_0, c_{K-1}]; inputs outside
// that range clamp to the end centers.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fedq/linalg.hpp"
#include "fedq/rng.hpp"

namespace fedq::quant {

inline constexpr int kMaxRate = 24;
inline constexpr double kRangeEpsilon = 1e-12;

enum class Compander { kIdentity, kTanh, kQuantile };

std::string_view compander_name(Compander c);

/// What a builder does when the input range is narrower than kRangeEpsilon.
enum class OnDegenerate {
  kThrow,     // raise ErrorCode::kDegenerateRange
  kCollapse,  // K identical centers, everything maps to index 0
};

class Codebook {
 public:
  /// Validates the invariants: K == 2^rate, strictly increasing centers and
  /// all centers inside [lo, hi]. Throws ErrorCode::kInvalidArgument.
  Codebook(int rate, std::vector<double> centers, Compander compander, double lo,
           double hi);

  /// K copies of `value`. The strict-increase invariant is waived.
  static Codebook Collapsed(double value, int rate, Compander compander);

  int rate() const { return rate_; }
  std::size_t size() const { return centers_.size(); }
  std::span<const double> centers() const { return centers_; }
  double center(std::size_t i) const { return centers_[i]; }
  Compander compander() const { return compander_; }
  std::pair<double, double> source_range() const { return {lo_, hi_}; }
  bool collapsed() const { return collapsed_; }

  /// Index chosen for `x` given one uniform draw `u` in [0, 1).
  std::uint32_t quantize(double x, double u) const;

 private:
  Codebook() = default;

  int rate_ = 0;
  std::vector<double> centers_;
  Compander compander_ = Compander::kIdentity;
  double lo_ = 0.0;
  double hi_ = 0.0;
  bool collapsed_ = false;
};

using CodebookPtr = std::shared_ptr<const Codebook>;

/// A low-bitwidth matrix: row-major codebook indices plus the codebook.
class QuantizedTensor {
 public:
  QuantizedTensor(std::size_t rows, std::size_t cols, std::vector<std::uint32_t> indices,
                  CodebookPtr codebook);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const std::uint32_t> indices() const { return indices_; }
  const Codebook& codebook() const { return *codebook_; }
  const CodebookPtr& codebook_ptr() const { return codebook_; }
  int rate() const { return codebook_->rate(); }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint32_t> indices_;
  CodebookPtr codebook_;
};

/// K endpoint-inclusive equispaced centers on [lo, hi].
Codebook build_uniform_codebook(double lo, double hi, int rate,
                                OnDegenerate on_degenerate = OnDegenerate::kThrow);

/// Uniform codebook in the tanh domain mapped back through atanh. The end
/// centers are pinned to min(values) and max(values).
Codebook build_tanh_codebook(std::span<const double> values, int rate,
                             OnDegenerate on_degenerate = OnDegenerate::kCollapse);

/// Empirical quantiles at p_i = (i + 0.5) / K with linear interpolation
/// between order statistics. Duplicate centers are nudged apart by ulps.
Codebook build_quantile_codebook(std::span<const double> values, int rate,
                                 OnDegenerate on_degenerate = OnDegenerate::kThrow);

/// Consumes exactly one uniform draw per element, in row-major order.
QuantizedTensor stochastic_quantize(const Matrix& x, CodebookPtr codebook, Rng& rng);

Matrix dequantize(const QuantizedTensor& q);

/// Mean over samples of the squared quantization error, averaged over
/// `draws` independent stochastic roundings of the whole sample set.
double empirical_mse(const Codebook& codebook, std::span<const double> samples, Rng& rng,
                     int draws = 1);

inline std::span<const double> elements(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace fedq::quant
