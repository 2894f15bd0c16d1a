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

#include "mos/attack.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mos {
namespace {

double step_direction(double g, StepRule rule) {
  if (rule == StepRule::kRaw) return g;
  return static_cast<double>((g > 0.0) - (g < 0.0));
}

// Z = X + eta * step(G)
Mat ascend(const Mat& X, const Mat& G, double eta, StepRule rule) {
  Mat Z = X;
  auto& z = Z.values();
  const auto& g = G.values();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += eta * step_direction(g[i], rule);
  return Z;
}

Mat offset_rows(const Mat& base, std::span<const double> x, double sign) {
  Mat out = base;
  for (std::size_t k = 0; k < out.rows(); ++k) {
    auto r = out.row(k);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += sign * x[j];
  }
  return out;
}

std::optional<std::size_t> first_misclassified(const std::vector<std::size_t>& pred,
                                               std::size_t y) {
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k] != y) return k;
  }
  return std::nullopt;
}

std::vector<std::size_t> row_argmax(const Mat& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t k = 0; k < logits.rows(); ++k) out[k] = argmax(logits.row(k));
  return out;
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
  if (!(initial_step() > 0.0)) throw std::invalid_argument("step size must be positive");
  if (n_iter == 0) throw std::invalid_argument("n_iter must be at least 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0, 1)");
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  if (K == 0) throw std::invalid_argument("K must be at least 1");
  if (losses.empty()) throw std::invalid_argument("at least one loss is required");
  if (restarts == 0) throw std::invalid_argument("restarts must be at least 1");
}

void project_set(Mat& X, std::span<const double> x, double epsilon) {
  if (X.cols() != x.size()) throw std::invalid_argument("project_set: dimension mismatch");
  for (std::size_t k = 0; k < X.rows(); ++k) {
    auto r = X.row(k);
    for (std::size_t j = 0; j < r.size(); ++j) {
      const double lo = std::max(0.0, x[j] - epsilon);
      const double hi = std::min(1.0, x[j] + epsilon);
      r[j] = std::clamp(r[j], lo, hi);
    }
  }
}

std::vector<std::size_t> checkpoint_schedule(std::size_t n_iter) {
  // Fractions are tracked in hundredths so the ceilings are exact.
  std::vector<long> p{0, 22};
  while (p.back() < 100) {
    const long prev = p[p.size() - 2];
    p.push_back(p.back() + std::max(p.back() - prev - 3, 6L));
  }
  std::vector<std::size_t> w;
  for (long pj : p) {
    const auto n = static_cast<long>(n_iter);
    const auto wj = static_cast<std::size_t>(std::min((pj * n + 99) / 100, n));
    if (w.empty() || w.back() != wj) w.push_back(wj);
  }
  return w;
}

std::size_t count_increases(std::span<const double> g, std::size_t lo, std::size_t hi) {
  std::size_t n = 0;
  for (std::size_t i = lo; i < hi && i + 1 < g.size(); ++i) n += (g[i + 1] > g[i]);
  return n;
}

PerturbationSet random_start(std::size_t K, std::size_t d, double epsilon, std::uint64_t seed) {
  PerturbationSet start(K, d);
  if (epsilon == 0.0) return start;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-epsilon, epsilon);
  for (double& v : start.deltas.values()) v = unif(rng);
  return start;
}

AttackOutcome run_momentum_ascent(const SetEvaluator& evaluate, std::span<const double> x,
                                  std::size_t y, const Mat& X0, const AttackConfig& cfg,
                                  const AttackObserver& observer) {
  cfg.validate();
  AttackOutcome out;
  const std::vector<std::size_t> schedule = checkpoint_schedule(cfg.n_iter);
  double eta = cfg.initial_step();
  std::vector<double> g_hist;
  g_hist.reserve(cfg.n_iter + 1);

  Mat X_prev = X0;
  project_set(X_prev, x, cfg.epsilon);
  Mat X = X_prev;
  Mat X_max = X_prev;
  double g_max = 0.0;
  SetEvaluation current;
  SetEvaluation best;

  auto finish = [&]() {
    out.final_delta = offset_rows(X, x, -1.0);
    out.best_delta = offset_rows(X_max, x, -1.0);
    out.g_max = g_max;
    return out;
  };
  auto record = [&](std::size_t iter, const SetEvaluation& e, bool checkpoint, bool halved) {
    const auto hit = first_misclassified(e.predictions, y);
    if (hit && !out.success) {
      out.success = true;
      out.success_iteration = iter;
      out.success_index = *hit;
    }
    out.trace.push_back({iter, e.value, g_max, eta, hit.has_value()});
    if (observer) observer({iter, X, e.value, g_max, X_max, eta, checkpoint, halved});
    return hit.has_value() && cfg.early_stop;
  };
  auto safe_eval = [&](const Mat& M, std::size_t iter) -> std::optional<SetEvaluation> {
    try {
      SetEvaluation e = evaluate(M);
      if (!std::isfinite(e.value) || !all_finite(e.grads.values())) {
        throw NumericError("non-finite objective or gradient");
      }
      return e;
    } catch (const NumericError& err) {
      out.failed = true;
      out.failed_iteration = iter;
      out.failure = err.what();
      return std::nullopt;
    }
  };

  // Lines 3-7: the start and one plain ascent step.
  auto e0 = safe_eval(X_prev, 0);
  if (!e0) return finish();
  g_max = e0->value;
  g_hist.push_back(e0->value);
  best = *e0;
  if (record(0, *e0, false, false)) return finish();

  X = ascend(X_prev, e0->grads, eta, cfg.step_rule);
  project_set(X, x, cfg.epsilon);
  auto e1 = safe_eval(X, 1);
  if (!e1) return finish();
  g_hist.push_back(e1->value);
  if (e1->value > g_max) {
    g_max = e1->value;
    X_max = X;
    best = *e1;
  }
  current = *e1;
  if (record(1, *e1, false, false)) return finish();

  std::size_t next_ckpt = 1;
  double eta_at_ckpt = eta;
  double gmax_at_ckpt = g_max;

  for (std::size_t k = 1; k < cfg.n_iter; ++k) {
    Mat Z = ascend(X, current.grads, eta, cfg.step_rule);
    project_set(Z, x, cfg.epsilon);
    Mat X_next = X;
    {
      auto& xn = X_next.values();
      const auto& xc = X.values();
      const auto& xp = X_prev.values();
      const auto& z = Z.values();
      for (std::size_t i = 0; i < xn.size(); ++i) {
        xn[i] = xc[i] + cfg.alpha * (z[i] - xc[i]) + (1.0 - cfg.alpha) * (xc[i] - xp[i]);
      }
    }
    project_set(X_next, x, cfg.epsilon);
    auto e = safe_eval(X_next, k + 1);
    if (!e) return finish();
    g_hist.push_back(e->value);
    if (e->value > g_max) {
      g_max = e->value;
      X_max = X_next;
      best = *e;
    }
    X_prev = std::move(X);
    X = std::move(X_next);
    current = std::move(*e);

    bool at_ckpt = false;
    bool halved = false;
    if (next_ckpt < schedule.size() && k == schedule[next_ckpt]) {
      at_ckpt = true;
      const std::size_t lo = schedule[next_ckpt - 1];
      const std::size_t hi = schedule[next_ckpt];
      const std::size_t n_inc = count_increases(g_hist, lo, hi);
      const bool cond1 = static_cast<double>(n_inc) < cfg.rho * static_cast<double>(hi - lo);
      const bool cond2 = (eta_at_ckpt == eta) && (gmax_at_ckpt == g_max);
      eta_at_ckpt = eta;
      gmax_at_ckpt = g_max;
      if (cond1 || cond2) {
        halved = true;
        eta /= 2.0;
        X = X_max;
        current = best;
        g_hist.back() = g_max;
      }
      ++next_ckpt;
    }
    if (record(k + 1, current, at_ckpt, halved)) return finish();
  }
  return finish();
}

AttackOutcome mos_attack_from(const ClassifierWeights& model, const LabeledPoint& point,
                              const AttackConfig& cfg, const PerturbationSet& start,
                              const AttackObserver& observer, ExecPolicy policy) {
  if (start.dim() != point.x.size()) {
    throw std::invalid_argument("starting perturbations do not match the input dimension");
  }
  SetEvaluator evaluate = [&](const Mat& X) {
    const PerturbationSet deltas(offset_rows(X, point.x, -1.0));
    SetGradient sg = grad_set_objective(model, point, deltas, cfg.losses, cfg.mu, policy);
    return SetEvaluation{sg.value, std::move(sg.grads), row_argmax(sg.logits)};
  };
  const Mat X0 = offset_rows(start.deltas, point.x, 1.0);
  AttackOutcome out = run_momentum_ascent(evaluate, point.x, point.y, X0, cfg, observer);
  if (!out.failed) {
    try {
      out.best_losses = loss_matrix(model, point, PerturbationSet(out.best_delta), cfg.losses);
    } catch (const NumericError& err) {
      out.failed = true;
      out.failure = err.what();
    }
  }
  return out;
}

AttackOutcome mos_attack(const ClassifierWeights& model, const LabeledPoint& point,
                         const AttackConfig& cfg, const AttackObserver& observer) {
  cfg.validate();
  return mos_attack_from(model, point, cfg,
                         random_start(cfg.K, point.x.size(), cfg.epsilon, cfg.seed), observer);
}

AttackOutcome apgd_single(const ClassifierWeights& model, const LabeledPoint& point,
                          LossId loss, const AttackConfig& cfg,
                          const AttackObserver& observer) {
  AttackConfig single = cfg;
  single.K = 1;
  single.losses = {loss};
  single.validate();
  SetEvaluator evaluate = [&](const Mat& X) {
    SingleLossGradient sg = grad_single_loss(model, X.row(0), point.y, loss);
    SetEvaluation e;
    e.value = sg.value;
    const std::size_t d = sg.grad.size();
    e.grads = Mat(1, d, std::move(sg.grad));
    e.predictions = {argmax(sg.logits)};
    return e;
  };
  const PerturbationSet start = random_start(1, point.x.size(), cfg.epsilon, cfg.seed);
  const Mat X0 = offset_rows(start.deltas, point.x, 1.0);
  return run_momentum_ascent(evaluate, point.x, point.y, X0, single, observer);
}

bool ensemble_best(std::span<const AttackOutcome> outcomes) {
  return std::any_of(outcomes.begin(), outcomes.end(),
                     [](const AttackOutcome& o) { return o.success; });
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t point, std::uint64_t restart) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (point + 1) + 0xbf58476d1ce4e5b9ULL * restart;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mos
