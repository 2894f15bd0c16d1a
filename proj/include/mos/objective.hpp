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

#ifndef MOS_OBJECTIVE_HPP_
#define MOS_OBJECTIVE_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "mos/classifier.hpp"
#include "mos/losses.hpp"
#include "mos/numerics.hpp"

namespace mos {

// K perturbations of a d-dimensional input, one per row.
struct PerturbationSet {
  Mat deltas;

  PerturbationSet() = default;
  explicit PerturbationSet(Mat d) : deltas(std::move(d)) {}
  PerturbationSet(std::size_t K, std::size_t d) : deltas(K, d) {}

  std::size_t size() const { return deltas.rows(); }
  std::size_t dim() const { return deltas.cols(); }
};

// values(i, k) = f_i(delta_k) for loss losses[i].
struct LossMatrix {
  std::vector<LossId> losses;
  Mat values;

  std::size_t m() const { return values.rows(); }
  std::size_t K() const { return values.cols(); }
};

struct ScalarizationParams {
  Vec w;
  Vec z_star;
  double mu = 1.0;

  static ScalarizationParams uniform(std::size_t m, double mu);
  void validate(std::size_t m) const;
};

enum class ExecPolicy { kSerial, kParallel };

LossMatrix loss_matrix(const ClassifierWeights& model, const LabeledPoint& point,
                       const PerturbationSet& delta_set, std::span<const LossId> losses);

// min_i w_i |f_i - z*_i|
double tchebycheff(std::span<const double> fvals, const ScalarizationParams& params);

// min_i w_i |max_k F(i,k) - z*_i|. Non-smooth reference.
double set_objective_exact(const LossMatrix& F, const ScalarizationParams& params);

// Smooth min over i of w_i |smooth max over k of F(i,k) - z*_i|.
double set_objective_smooth(const LossMatrix& F, const ScalarizationParams& params);

// The attack objective: smooth_min_i(smooth_max_k(F(i,k), mu), mu)
//   = -mu log sum_i (sum_k exp(F(i,k)/mu))^{-1}.
double set_objective_simplified(const LossMatrix& F, double mu);

// d set_objective_simplified / d F(i,k).
Mat set_objective_simplified_partials(const LossMatrix& F, double mu);

struct SetGradient {
  double value = 0.0;
  LossMatrix F;
  Mat grads;   // K x d, gradient w.r.t. each delta_k
  Mat logits;  // K x C at x + delta_k
};

// Gradient of set_objective_simplified(loss_matrix(...)) w.r.t. every delta_k.
// The parallel policy distributes the K rows over OpenMP threads and produces
// results bit-identical to the serial reference.
SetGradient grad_set_objective(const ClassifierWeights& model, const LabeledPoint& point,
                               const PerturbationSet& delta_set, std::span<const LossId> losses,
                               double mu, ExecPolicy policy = ExecPolicy::kSerial);

struct SingleLossGradient {
  double value = 0.0;
  Vec grad;  // w.r.t. the input
  Vec logits;
};

// One loss at one input, without any scalarization layer.
SingleLossGradient grad_single_loss(const ClassifierWeights& model, std::span<const double> x,
                                    std::size_t y, LossId loss);

}  // namespace mos

#endif  // MOS_OBJECTIVE_HPP_
