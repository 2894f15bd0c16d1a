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

#ifndef MOS_NUMERICS_HPP_
#define MOS_NUMERICS_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mos/errors.hpp"

namespace mos {

using Vec = std::vector<double>;

// Dense row-major matrix. Only the operations the pipeline needs.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, Vec values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  const Vec& values() const { return values_; }
  Vec& values() { return values_; }

  // y = A x
  Vec multiply(std::span<const double> x) const;
  // y = A^T x
  Vec multiply_transposed(std::span<const double> x) const;

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec values_;
};

bool all_finite(std::span<const double> xs);
double max_of(std::span<const double> xs);
double dot(std::span<const double> a, std::span<const double> b);

// scale * log(sum_i exp(x_i / scale)), max-shifted.
double log_sum_exp(std::span<const double> xs, double scale);

// Smooth maximum: max(xs) <= smooth_max <= max(xs) + mu*log(n).
double smooth_max(std::span<const double> xs, double mu);

// Smooth minimum, defined as -smooth_max(-xs, mu).
double smooth_min(std::span<const double> xs, double mu);

// Gradient of smooth_max w.r.t. xs, i.e. softmax(xs / mu).
Vec smooth_max_weights(std::span<const double> xs, double mu);

// Gradient of smooth_min w.r.t. xs, i.e. softmax(-xs / mu).
Vec smooth_min_weights(std::span<const double> xs, double mu);

// Max-shifted softmax.
Vec softmax(std::span<const double> h);

using ScalarFn = std::function<double(std::span<const double>)>;

// Central-difference gradient. h must lie in [1e-7, 1e-3].
Vec finite_diff_grad(const ScalarFn& fn, std::span<const double> x, double h);

}  // namespace mos

#endif  // MOS_NUMERICS_HPP_
