/* Copyright 2026 The MOS Attack Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "mos/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mos {

Mat::Mat(std::size_t rows, std::size_t cols, Vec values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw std::invalid_argument("Mat: value count does not match rows*cols");
  }
}

Vec Mat::multiply(std::span<const double> x) const {
  if (x.size() != cols_) throw std::invalid_argument("Mat::multiply: shape mismatch");
  Vec y(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    y[r] = dot(row(r), x);
  }
  return y;
}

Vec Mat::multiply_transposed(std::span<const double> x) const {
  if (x.size() != rows_) {
    throw std::invalid_argument("Mat::multiply_transposed: shape mismatch");
  }
  Vec y(cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const auto a = row(r);
    for (std::size_t c = 0; c < cols_; ++c) y[c] += a[c] * xr;
  }
  return y;
}

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

double max_of(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("max_of: empty input");
  return *std::max_element(xs.begin(), xs.end());
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double log_sum_exp(std::span<const double> xs, double scale) {
  if (xs.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  if (!(scale > 0.0)) throw std::invalid_argument("log_sum_exp: scale must be positive");
  const double m = max_of(xs);
  if (!std::isfinite(m)) throw NumericError("log_sum_exp: non-finite input");
  double sum = 0.0;
  for (double x : xs) sum += std::exp((x - m) / scale);
  return m + scale * std::log(sum);
}

double smooth_max(std::span<const double> xs, double mu) { return log_sum_exp(xs, mu); }

double smooth_min(std::span<const double> xs, double mu) {
  Vec neg(xs.size());
  std::transform(xs.begin(), xs.end(), neg.begin(), [](double v) { return -v; });
  return -smooth_max(neg, mu);
}

Vec smooth_max_weights(std::span<const double> xs, double mu) {
  if (xs.empty()) throw std::invalid_argument("smooth_max_weights: empty input");
  if (!(mu > 0.0)) throw std::invalid_argument("smooth_max_weights: mu must be positive");
  const double m = max_of(xs);
  Vec w(xs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    w[i] = std::exp((xs[i] - m) / mu);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

Vec smooth_min_weights(std::span<const double> xs, double mu) {
  Vec neg(xs.size());
  std::transform(xs.begin(), xs.end(), neg.begin(), [](double v) { return -v; });
  return smooth_max_weights(neg, mu);
}

Vec softmax(std::span<const double> h) { return smooth_max_weights(h, 1.0); }

Vec finite_diff_grad(const ScalarFn& fn, std::span<const double> x, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw std::invalid_argument("finite_diff_grad: step must lie in [1e-7, 1e-3]");
  }
  Vec probe(x.begin(), x.end());
  Vec grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = probe[i];
    probe[i] = xi + h;
    const double up = fn(probe);
    probe[i] = xi - h;
    const double down = fn(probe);
    probe[i] = xi;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace mos
