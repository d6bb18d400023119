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

#include "fedq/quantkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fedq/error.hpp"

namespace fedq::quant {
namespace {

void check_rate(int rate) {
  if (rate < 1 || rate > kMaxRate) {
    raise(ErrorCode::kInvalidArgument,
          "rate must be in [1, " + std::to_string(kMaxRate) + "], got " +
              std::to_string(rate));
  }
}

std::size_t levels(int rate) { return std::size_t{1} << rate; }

void check_finite_nonempty(std::span<const double> values) {
  if (values.empty()) raise(ErrorCode::kInvalidArgument, "codebook input is empty");
  for (double v : values) {
    if (!std::isfinite(v)) raise(ErrorCode::kInvalidArgument, "codebook input is not finite");
  }
}

// Restores strict increase inside [lo, hi] by moving ties one ulp at a time:
// upward first, then downward from hi if the upward pass overshot.
void repair_strict_increase(std::vector<double>& c, double lo, double hi) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (!(c[i] > c[i - 1])) c[i] = std::nextafter(c[i - 1], kInf);
  }
  if (c.back() > hi) {
    c.back() = hi;
    for (std::size_t i = c.size() - 1; i-- > 0;) {
      if (!(c[i] < c[i + 1])) c[i] = std::nextafter(c[i + 1], -kInf);
    }
  }
  if (c.front() < lo) {
    raise(ErrorCode::kDegenerateRange, "range too narrow to hold strictly increasing centers");
  }
}

}  // namespace

std::string_view compander_name(Compander c) {
  switch (c) {
    case Compander::kIdentity: return "identity";
    case Compander::kTanh: return "tanh";
    case Compander::kQuantile: return "quantile";
  }
  return "unknown";
}

Codebook::Codebook(int rate, std::vector<double> centers, Compander compander, double lo,
                   double hi)
    : rate_(rate), centers_(std::move(centers)), compander_(compander), lo_(lo), hi_(hi) {
  check_rate(rate);
  if (centers_.size() != levels(rate)) {
    raise(ErrorCode::kInvalidArgument, "codebook must hold 2^rate centers");
  }
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    const double c = centers_[i];
    if (!std::isfinite(c) || c < lo_ || c > hi_) {
      std::ostringstream os;
      os << "center " << i << " = " << c << " outside source range [" << lo_ << ", " << hi_
         << "]";
      raise(ErrorCode::kInvalidArgument, os.str());
    }
    if (i > 0 && !(c > centers_[i - 1])) {
      raise(ErrorCode::kInvalidArgument, "codebook centers must be strictly increasing");
    }
  }
}

Codebook Codebook::Collapsed(double value, int rate, Compander compander) {
  check_rate(rate);
  Codebook cb;
  cb.rate_ = rate;
  cb.centers_.assign(levels(rate), value);
  cb.compander_ = compander;
  cb.lo_ = value;
  cb.hi_ = value;
  cb.collapsed_ = true;
  return cb;
}

std::uint32_t Codebook::quantize(double x, double u) const {
  if (collapsed_) return 0;
  const std::size_t last = centers_.size() - 1;
  if (x <= centers_.front()) return 0;
  if (x >= centers_[last]) return static_cast<std::uint32_t>(last);
  const auto it = std::upper_bound(centers_.begin(), centers_.end(), x);
  const auto j = static_cast<std::size_t>(it - centers_.begin()) - 1;
  const double p = (x - centers_[j]) / (centers_[j + 1] - centers_[j]);
  return static_cast<std::uint32_t>(u < p ? j + 1 : j);
}

QuantizedTensor::QuantizedTensor(std::size_t rows, std::size_t cols,
                                 std::vector<std::uint32_t> indices, CodebookPtr codebook)
    : rows_(rows), cols_(cols), indices_(std::move(indices)), codebook_(std::move(codebook)) {
  if (!codebook_) raise(ErrorCode::kInvalidArgument, "quantized tensor needs a codebook");
  if (indices_.size() != rows_ * cols_) {
    raise(ErrorCode::kShapeMismatch, "index count does not match shape");
  }
  const std::size_t k = codebook_->size();
  for (std::uint32_t idx : indices_) {
    if (idx >= k) raise(ErrorCode::kInvalidArgument, "codebook index out of range");
  }
}

Codebook build_uniform_codebook(double lo, double hi, int rate, OnDegenerate on_degenerate) {
  check_rate(rate);
  if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
    raise(ErrorCode::kInvalidArgument, "uniform codebook needs finite lo <= hi");
  }
  if (hi - lo < kRangeEpsilon) {
    if (on_degenerate == OnDegenerate::kCollapse) {
      return Codebook::Collapsed(lo, rate, Compander::kIdentity);
    }
    raise(ErrorCode::kDegenerateRange, "uniform codebook range is narrower than 1e-12");
  }
  const std::size_t k = levels(rate);
  std::vector<double> centers(k);
  const double step = (hi - lo) / static_cast<double>(k - 1);
  for (std::size_t i = 0; i < k; ++i) centers[i] = lo + static_cast<double>(i) * step;
  centers.back() = hi;
  repair_strict_increase(centers, lo, hi);
  return Codebook(rate, std::move(centers), Compander::kIdentity, lo, hi);
}

Codebook build_tanh_codebook(std::span<const double> values, int rate,
                             OnDegenerate on_degenerate) {
  check_rate(rate);
  check_finite_nonempty(values);
  const auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *min_it;
  const double hi = *max_it;
  const double ulo = std::tanh(lo);
  const double uhi = std::tanh(hi);
  if (hi - lo < kRangeEpsilon || uhi - ulo < kRangeEpsilon) {
    if (on_degenerate == OnDegenerate::kCollapse) {
      return Codebook::Collapsed(lo, rate, Compander::kTanh);
    }
    raise(ErrorCode::kDegenerateRange, "tanh codebook range is narrower than 1e-12");
  }
  const std::size_t k = levels(rate);
  std::vector<double> centers(k);
  const double step = (uhi - ulo) / static_cast<double>(k - 1);
  centers.front() = lo;
  centers.back() = hi;
  for (std::size_t i = 1; i + 1 < k; ++i) {
    const double c = std::atanh(ulo + static_cast<double>(i) * step);
    centers[i] = std::clamp(c, lo, hi);
  }
  repair_strict_increase(centers, lo, hi);
  return Codebook(rate, std::move(centers), Compander::kTanh, lo, hi);
}

Codebook build_quantile_codebook(std::span<const double> values, int rate,
                                 OnDegenerate on_degenerate) {
  check_rate(rate);
  check_finite_nonempty(values);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  if (hi - lo < kRangeEpsilon) {
    if (on_degenerate == OnDegenerate::kCollapse) {
      return Codebook::Collapsed(lo, rate, Compander::kQuantile);
    }
    raise(ErrorCode::kDegenerateRange, "quantile codebook input is constant");
  }
  const std::size_t k = levels(rate);
  const double last = static_cast<double>(sorted.size() - 1);
  std::vector<double> centers(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
    const double h = p * last;
    const auto lower = static_cast<std::size_t>(std::floor(h));
    const std::size_t upper = std::min(lower + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lower);
    centers[i] = sorted[lower] + frac * (sorted[upper] - sorted[lower]);
  }
  repair_strict_increase(centers, lo, hi);
  return Codebook(rate, std::move(centers), Compander::kQuantile, lo, hi);
}

QuantizedTensor stochastic_quantize(const Matrix& x, CodebookPtr codebook, Rng& rng) {
  if (!codebook) raise(ErrorCode::kInvalidArgument, "null codebook");
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::uint32_t> indices(n);
  const double* data = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    if (!std::isfinite(data[i])) raise(ErrorCode::kInvalidArgument, "cannot quantize non-finite value");
    indices[i] = codebook->quantize(data[i], u);
  }
  return QuantizedTensor(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(x.cols()),
                         std::move(indices), std::move(codebook));
}

Matrix dequantize(const QuantizedTensor& q) {
  Matrix out(static_cast<Eigen::Index>(q.rows()), static_cast<Eigen::Index>(q.cols()));
  const auto idx = q.indices();
  const auto centers = q.codebook().centers();
  double* data = out.data();
  for (std::size_t i = 0; i < idx.size(); ++i) data[i] = centers[idx[i]];
  return out;
}

double empirical_mse(const Codebook& codebook, std::span<const double> samples, Rng& rng,
                     int draws) {
  if (samples.empty()) raise(ErrorCode::kEmptyInput, "no samples");
  if (draws < 1) raise(ErrorCode::kInvalidArgument, "draws must be >= 1");
  const auto centers = codebook.centers();
  double total = 0.0;
  for (int d = 0; d < draws; ++d) {
    for (double x : samples) {
      const double e = x - centers[codebook.quantize(x, rng.uniform())];
      total += e * e;
    }
  }
  return total / (static_cast<double>(samples.size()) * draws);
}

}  // namespace fedq::quant
