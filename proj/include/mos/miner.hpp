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

#ifndef MOS_MINER_HPP_
#define MOS_MINER_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mos/losses.hpp"
#include "mos/numerics.hpp"
#include "mos/objective.hpp"

namespace mos {

struct MinerConfig {
  double lambda = 1.0;  // sparsity weight
  double T = 0.85;      // binarization threshold
  double C = 0.75;      // contribution threshold
  double mu = 1.0;
  std::size_t steps = 500;
  double step_size = 0.1;
  // Seeded random starts tried in addition to the all-ones start.
  std::size_t extra_starts = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

// Row-wise min-max normalized loss matrix; constant rows become zeros.
struct NormalizedLossMatrix {
  std::vector<LossId> losses;
  Mat values;

  std::size_t m() const { return values.rows(); }
  std::size_t K() const { return values.cols(); }
};

NormalizedLossMatrix normalize_losses(const LossMatrix& F);

struct RelaxedValue {
  double value = 0.0;
  Vec grad;  // w.r.t. beta
};

// sum_i mu log( sum_k e^{f_ik/mu} / sum_k e^{beta_k f_ik/mu} ) + lambda sum_k beta_k
RelaxedValue relaxed_objective(const NormalizedLossMatrix& Fbar, std::span<const double> beta,
                               const MinerConfig& cfg);

using Selection = std::vector<int>;  // binary indicator over the K members

// Projected gradient descent on the relaxed objective over [0,1]^K, from the
// all-ones start and cfg.extra_starts seeded random starts. Each result is
// thresholded at T; the binary vector with the lowest relaxed objective wins.
Selection mine_dominant(const NormalizedLossMatrix& Fbar, const MinerConfig& cfg);

// Enumerates all 2^K binary vectors (K <= 20).
Selection exhaustive_dominant(const NormalizedLossMatrix& Fbar, const MinerConfig& cfg);

// True when a is preferred over b on an objective tie: a has a 1 at the first
// position where they differ.
bool lexicographically_first(const Selection& a, const Selection& b);

struct DominantExample {
  std::size_t index = 0;          // column k of the loss matrix
  std::vector<LossId> contributes;  // sorted loss ids
};

struct PatternRecord {
  Selection beta;
  std::vector<DominantExample> dominant;
};

// For each selected k, the losses i with Fbar(i,k) > C * max_k' Fbar(i,k').
// Selected members that contribute to no loss are dropped from beta.
PatternRecord extract_patterns(const NormalizedLossMatrix& Fbar, const Selection& beta,
                               const MinerConfig& cfg);

// "0+1+2"-style key.
std::string pattern_key(const std::vector<LossId>& ids);

struct PatternCount {
  std::string pattern;
  std::size_t count = 0;
  double percent = 0.0;
};

struct PatternHistogram {
  std::size_t total = 0;
  std::vector<PatternCount> patterns;  // descending count, then key
  std::vector<PatternCount> filtered;  // patterns with percent >= 1
  double all_losses_percent = 0.0;
};

PatternHistogram aggregate_patterns(const std::vector<PatternRecord>& records,
                                    const std::vector<LossId>& losses,
                                    double min_percent = 1.0);

// normalize -> mine -> extract for one attacked point.
PatternRecord mine_point(const LossMatrix& F, const MinerConfig& cfg);

}  // namespace mos

#endif  // MOS_MINER_HPP_
