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

#ifndef MOS_ATTACK_HPP_
#define MOS_ATTACK_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mos/classifier.hpp"
#include "mos/losses.hpp"
#include "mos/numerics.hpp"
#include "mos/objective.hpp"

namespace mos {

enum class StepRule {
  kSign,  // l_inf steepest ascent: X + eta * sign(grad)
  kRaw,   // X + eta * grad
};

struct AttackConfig {
  double epsilon = 0.1;
  double eta0 = 0.0;  // <= 0 selects 2 * epsilon
  std::size_t n_iter = 50;
  double alpha = 0.75;
  double rho = 0.75;
  double mu = 1.0;
  std::vector<LossId> losses = all_losses();
  std::size_t K = 1;
  std::uint64_t seed = 0;
  std::size_t restarts = 1;
  bool early_stop = false;
  StepRule step_rule = StepRule::kSign;

  double initial_step() const { return eta0 > 0.0 ? eta0 : 2.0 * epsilon; }
  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

struct TraceEntry {
  std::size_t iteration = 0;
  double g = 0.0;
  double g_max = 0.0;
  double eta = 0.0;
  bool success = false;  // some member misclassified at this iterate
};

// Read-only view handed to an observer after every iterate is formed.
struct IterationView {
  std::size_t iteration;  // index of the iterate X^(iteration)
  const Mat& X;
  double g;
  double g_max;
  const Mat& X_max;
  double eta;
  bool checkpoint;  // a checkpoint decision was taken at this iteration
  bool halved;      // ... and it halved the step, X was reset to X_max
};
using AttackObserver = std::function<void(const IterationView&)>;

struct AttackOutcome {
  Mat final_delta;  // last iterate minus x
  Mat best_delta;   // X_max minus x
  double g_max = 0.0;
  bool success = false;
  std::optional<std::size_t> success_iteration;
  std::optional<std::size_t> success_index;
  std::vector<TraceEntry> trace;
  LossMatrix best_losses;  // losses at X_max (set attacks only)
  bool failed = false;
  std::size_t failed_iteration = 0;
  std::string failure;
};

// Clamps each row of X into [max(0, x_j - eps), min(1, x_j + eps)].
void project_set(Mat& X, std::span<const double> x, double epsilon);

// Checkpoints w_j = ceil(p_j * n_iter), p_0 = 0, p_1 = 0.22,
// p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06), capped at n_iter.
std::vector<std::size_t> checkpoint_schedule(std::size_t n_iter);

// #{ i in [lo, hi) : g[i+1] > g[i] }
std::size_t count_increases(std::span<const double> g, std::size_t lo, std::size_t hi);

// Seeded uniform start in [-eps, eps]^{K x d}.
PerturbationSet random_start(std::size_t K, std::size_t d, double epsilon, std::uint64_t seed);

// Objective value, gradient and predicted classes for a K x d stack of inputs.
struct SetEvaluation {
  double value = 0.0;
  Mat grads;
  std::vector<std::size_t> predictions;
};
using SetEvaluator = std::function<SetEvaluation(const Mat& X)>;

// The momentum ascent loop with checkpointed step halving, independent of
// what objective is being maximized.
AttackOutcome run_momentum_ascent(const SetEvaluator& evaluate, std::span<const double> x,
                                  std::size_t y, const Mat& X0, const AttackConfig& cfg,
                                  const AttackObserver& observer = {});

AttackOutcome mos_attack(const ClassifierWeights& model, const LabeledPoint& point,
                         const AttackConfig& cfg, const AttackObserver& observer = {});
AttackOutcome mos_attack_from(const ClassifierWeights& model, const LabeledPoint& point,
                              const AttackConfig& cfg, const PerturbationSet& start,
                              const AttackObserver& observer = {},
                              ExecPolicy policy = ExecPolicy::kSerial);

// Single-loss APGD. Uses cfg.seed for its start and ignores cfg.K/cfg.losses.
AttackOutcome apgd_single(const ClassifierWeights& model, const LabeledPoint& point,
                          LossId loss, const AttackConfig& cfg,
                          const AttackObserver& observer = {});

// Success iff any constituent succeeded.
bool ensemble_best(std::span<const AttackOutcome> outcomes);

// Deterministic per-(point, restart) seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t point, std::uint64_t restart);

}  // namespace mos

#endif  // MOS_ATTACK_HPP_
