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

#include "mos/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mos {
namespace {

Vec shifted_input(const LabeledPoint& point, std::span<const double> delta) {
  if (delta.size() != point.x.size()) {
    throw std::invalid_argument("perturbation length does not match the input");
  }
  Vec x = point.x;
  for (std::size_t j = 0; j < x.size(); ++j) x[j] += delta[j];
  return x;
}

Vec row_smooth_maxima(const LossMatrix& F, double mu) {
  Vec S(F.m());
  for (std::size_t i = 0; i < F.m(); ++i) S[i] = smooth_max(F.values.row(i), mu);
  return S;
}

void check_shape(const LossMatrix& F) {
  if (F.m() == 0 || F.K() == 0) throw std::invalid_argument("empty loss matrix");
}

// Per-row state of phase one: forward pass, loss values and loss gradients.
struct RowEval {
  Vec x;
  Vec logits;
  Mat loss_grads;  // m x C
};

RowEval eval_row(const ClassifierWeights& model, const LabeledPoint& point,
                 std::span<const double> delta, std::span<const LossId> losses, LossMatrix& F,
                 std::size_t k) {
  RowEval r;
  r.x = shifted_input(point, delta);
  r.logits = forward(model, r.x);
  const LogitContext ctx = make_context(r.logits, point.y);
  r.loss_grads = Mat(losses.size(), r.logits.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    F.values(i, k) = eval_loss(losses[i], ctx);
    const Vec g = grad_loss_logits(losses[i], ctx);
    std::copy(g.begin(), g.end(), r.loss_grads.row(i).begin());
  }
  return r;
}

// Phase three for a single row: combine the loss gradients with the
// scalarization partials and push the result through the network.
void finish_row(const ClassifierWeights& model, const RowEval& r, const Mat& partials,
                std::size_t k, Mat& grads) {
  Vec gl(r.logits.size(), 0.0);
  for (std::size_t i = 0; i < partials.rows(); ++i) {
    const double a = partials(i, k);
    const auto gi = r.loss_grads.row(i);
    for (std::size_t c = 0; c < gl.size(); ++c) gl[c] += a * gi[c];
  }
  const Vec gx = backward_input(model, r.x, gl);
  std::copy(gx.begin(), gx.end(), grads.row(k).begin());
}

}  // namespace

ScalarizationParams ScalarizationParams::uniform(std::size_t m, double mu) {
  return {Vec(m, 1.0), Vec(m, 0.0), mu};
}

void ScalarizationParams::validate(std::size_t m) const {
  if (w.size() != m || z_star.size() != m) {
    throw std::invalid_argument("scalarization params do not match the loss count");
  }
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  for (double wi : w) {
    if (!(wi > 0.0)) throw std::invalid_argument("weights must be positive");
  }
}

LossMatrix loss_matrix(const ClassifierWeights& model, const LabeledPoint& point,
                       const PerturbationSet& delta_set, std::span<const LossId> losses) {
  LossMatrix F{{losses.begin(), losses.end()}, Mat(losses.size(), delta_set.size())};
  for (std::size_t k = 0; k < delta_set.size(); ++k) {
    const Vec logits = forward(model, shifted_input(point, delta_set.deltas.row(k)));
    const LogitContext ctx = make_context(logits, point.y);
    for (std::size_t i = 0; i < losses.size(); ++i) F.values(i, k) = eval_loss(losses[i], ctx);
  }
  return F;
}

double tchebycheff(std::span<const double> fvals, const ScalarizationParams& params) {
  params.validate(fvals.size());
  if (fvals.empty()) throw std::invalid_argument("tchebycheff: empty objective vector");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fvals.size(); ++i) {
    best = std::min(best, params.w[i] * std::abs(fvals[i] - params.z_star[i]));
  }
  return best;
}

double set_objective_exact(const LossMatrix& F, const ScalarizationParams& params) {
  check_shape(F);
  Vec row_max(F.m());
  for (std::size_t i = 0; i < F.m(); ++i) row_max[i] = max_of(F.values.row(i));
  return tchebycheff(row_max, params);
}

double set_objective_smooth(const LossMatrix& F, const ScalarizationParams& params) {
  check_shape(F);
  params.validate(F.m());
  const Vec S = row_smooth_maxima(F, params.mu);
  Vec dist(F.m());
  for (std::size_t i = 0; i < F.m(); ++i) {
    dist[i] = params.w[i] * std::abs(S[i] - params.z_star[i]);
  }
  return smooth_min(dist, params.mu);
}

double set_objective_simplified(const LossMatrix& F, double mu) {
  check_shape(F);
  return smooth_min(row_smooth_maxima(F, mu), mu);
}

Mat set_objective_simplified_partials(const LossMatrix& F, double mu) {
  check_shape(F);
  const Vec S = row_smooth_maxima(F, mu);
  const Vec a = smooth_min_weights(S, mu);
  Mat partials(F.m(), F.K());
  for (std::size_t i = 0; i < F.m(); ++i) {
    const Vec b = smooth_max_weights(F.values.row(i), mu);
    for (std::size_t k = 0; k < F.K(); ++k) partials(i, k) = a[i] * b[k];
  }
  return partials;
}

SetGradient grad_set_objective(const ClassifierWeights& model, const LabeledPoint& point,
                               const PerturbationSet& delta_set, std::span<const LossId> losses,
                               double mu, ExecPolicy policy) {
  if (losses.empty()) throw std::invalid_argument("grad_set_objective: no losses");
  if (delta_set.size() == 0) throw std::invalid_argument("grad_set_objective: empty set");
  if (!(mu > 0.0)) throw std::invalid_argument("grad_set_objective: mu must be positive");
  const std::size_t K = delta_set.size();
  const std::size_t d = model.input_dim();
  const std::size_t C = model.num_classes();

  SetGradient out;
  out.F = LossMatrix{{losses.begin(), losses.end()}, Mat(losses.size(), K)};
  out.grads = Mat(K, d);
  out.logits = Mat(K, C);
  std::vector<RowEval> rows(K);

  if (policy == ExecPolicy::kSerial) {
    for (std::size_t k = 0; k < K; ++k) {
      rows[k] = eval_row(model, point, delta_set.deltas.row(k), losses, out.F, k);
    }
  } else {
    // Exceptions may not leave a parallel region; capture the first one.
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < K; ++k) {
      try {
        rows[k] = eval_row(model, point, delta_set.deltas.row(k), losses, out.F, k);
      } catch (...) {
#pragma omp critical(mos_grad_set_objective)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  out.value = set_objective_simplified(out.F, mu);
  const Mat partials = set_objective_simplified_partials(out.F, mu);

  if (policy == ExecPolicy::kSerial) {
    for (std::size_t k = 0; k < K; ++k) finish_row(model, rows[k], partials, k, out.grads);
  } else {
#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < K; ++k) finish_row(model, rows[k], partials, k, out.grads);
  }
  for (std::size_t k = 0; k < K; ++k) {
    std::copy(rows[k].logits.begin(), rows[k].logits.end(), out.logits.row(k).begin());
  }
  return out;
}

SingleLossGradient grad_single_loss(const ClassifierWeights& model, std::span<const double> x,
                                    std::size_t y, LossId loss) {
  SingleLossGradient out;
  out.logits = forward(model, x);
  const LogitContext ctx = make_context(out.logits, y);
  out.value = eval_loss(loss, ctx);
  out.grad = backward_input(model, x, grad_loss_logits(loss, ctx));
  return out;
}

}  // namespace mos
