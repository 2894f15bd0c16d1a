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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "mos/numerics.hpp"
#include "test_util.hpp"

using namespace mos;
using doctest::Approx;

TEST_CASE("log_sum_exp examples") {
  CHECK(log_sum_exp(Vec{0, 0}, 1.0) == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(log_sum_exp(Vec{1, 0}, 0.01) - 1.0) < 1e-9);
  // Shifted analytic form: 700 + log(e^0 + e^0).
  const double big = log_sum_exp(Vec{700, 700}, 1.0);
  CHECK(std::isfinite(big));
  CHECK(std::abs(big - (700.0 + std::log(2.0))) < 1e-12);
  CHECK(std::isfinite(log_sum_exp(Vec{1e6, -1e6, 1e6}, 1.0)));
}

TEST_CASE("log_sum_exp rejects bad input") {
  CHECK_THROWS_AS(log_sum_exp(Vec{}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(log_sum_exp(Vec{1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(smooth_min(Vec{}, 1.0), std::invalid_argument);
}

TEST_CASE("smooth_max examples") {
  const double v = smooth_max(Vec{3, 1, 2}, 1.0);
  CHECK(v >= 3.0);
  CHECK(v <= 3.0 + std::log(3.0));
  CHECK(smooth_max(Vec{5}, 1.0) == 5.0);
  CHECK(smooth_max(Vec{0, 0, 0, 0}, 2.0) == Approx(2.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("smooth_min examples") {
  CHECK(smooth_min(Vec{0, 0}, 1.0) == Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(smooth_min(Vec{-1, 4}, 0.01) + 1.0) < 1e-9);
  for (double c : {-3.5, 0.0, 2.25, 1e4}) CHECK(smooth_min(Vec{c}, 0.7) == c);
}

TEST_CASE("smoothing bounds and identities on random vectors") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> len(1, 16);
  for (double mu : {0.1, 1.0, 10.0}) {
    for (int t = 0; t < 1000; ++t) {
      const Vec xs = testing::uniform_vec(rng, len(rng), -10, 10);
      const double n = static_cast<double>(xs.size());
      const double mx = max_of(xs);
      const double smax = smooth_max(xs, mu);
      CHECK(smax - mx >= -1e-9);
      CHECK(smax - mx <= mu * std::log(n) + 1e-9);

      Vec neg = xs;
      for (double& v : neg) v = -v;
      CHECK(smooth_min(xs, mu) == -smooth_max(neg, mu));

      Vec shifted = xs;
      for (double& v : shifted) v += 3.75;
      CHECK(std::abs(smooth_max(shifted, mu) - (smax + 3.75)) < 1e-12 * std::max(1.0, smax));

      Vec bumped = xs;
      const std::size_t at = t % xs.size();
      bumped[at] += 0.5;
      // Strict only where the coordinate's weight is representable in double.
      if (xs[at] >= mx - 30.0 * mu) {
        CHECK(smooth_max(bumped, mu) > smax);
      } else {
        CHECK(smooth_max(bumped, mu) >= smax);
      }
    }
  }
}

TEST_CASE("smooth weights are the gradient") {
  const Vec x{0.3, -1.2, 2.0};
  const Vec fd = finite_diff_grad([](std::span<const double> v) { return smooth_max(v, 0.5); }, x,
                                  1e-6);
  CHECK(testing::rel_err(smooth_max_weights(x, 0.5), fd) < 1e-6);
  const Vec fd_min = finite_diff_grad(
      [](std::span<const double> v) { return smooth_min(v, 0.5); }, x, 1e-6);
  CHECK(testing::rel_err(smooth_min_weights(x, 0.5), fd_min) < 1e-6);
}

TEST_CASE("softmax sums to one") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const Vec p = softmax(testing::uniform_vec(rng, 5, -50, 50));
    double s = 0.0;
    for (double v : p) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("finite_diff_grad examples") {
  auto sumsq = [](std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return s;
  };
  const Vec g = finite_diff_grad(sumsq, Vec{1, 2}, 1e-5);
  CHECK(std::abs(g[0] - 2.0) < 1e-6);
  CHECK(std::abs(g[1] - 4.0) < 1e-6);

  const Vec z = finite_diff_grad([](std::span<const double>) { return 4.2; }, Vec{1, -7, 3}, 1e-4);
  for (double v : z) CHECK(v == 0.0);

  const Vec w = finite_diff_grad([](std::span<const double> v) { return smooth_max(v, 1.0); },
                                 Vec{0, 0}, 1e-5);
  CHECK(std::abs(w[0] - 0.5) < 1e-6);
  CHECK(std::abs(w[1] - 0.5) < 1e-6);
}

TEST_CASE("finite_diff_grad errors") {
  CHECK_THROWS_AS(finite_diff_grad([](std::span<const double>) { return 0.0; }, Vec{1}, 1e-2),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      finite_diff_grad([](std::span<const double>) { return std::nan(""); }, Vec{1}, 1e-5),
      NumericError);
}

TEST_CASE("Mat products") {
  const Mat A(2, 3, Vec{1, 2, 3, 4, 5, 6});
  const Vec y = A.multiply(Vec{1, 0, -1});
  CHECK(y == Vec{-2, -2});
  const Vec z = A.multiply_transposed(Vec{1, 1});
  CHECK(z == Vec{5, 7, 9});
  CHECK_THROWS_AS(Mat(2, 2, Vec{1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(A.multiply(Vec{1}), std::invalid_argument);
}
