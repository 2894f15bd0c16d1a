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

#include "mos/miner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace mos {
namespace {

constexpr double kTieTolerance = 1e-12;

double binary_objective(const NormalizedLossMatrix& Fbar, const Selection& beta,
                        const MinerConfig& cfg) {
  const Vec b(beta.begin(), beta.end());
  return relaxed_objective(Fbar, b, cfg).value;
}

bool better(double v, const Selection& s, double best_v, const Selection& best) {
  if (best.empty()) return true;
  const double tol = kTieTolerance * std::max(1.0, std::abs(best_v));
  if (v < best_v - tol) return true;
  if (v > best_v + tol) return false;
  return lexicographically_first(s, best);
}

Vec descend(const NormalizedLossMatrix& Fbar, Vec beta, const MinerConfig& cfg) {
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const RelaxedValue r = relaxed_objective(Fbar, beta, cfg);
    if (!std::isfinite(r.value)) throw NumericError("miner: non-finite relaxed objective");
    for (std::size_t k = 0; k < beta.size(); ++k) {
      beta[k] = std::clamp(beta[k] - cfg.step_size * r.grad[k], 0.0, 1.0);
    }
  }
  return beta;
}

}  // namespace

void MinerConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (!(T > 0.0 && T < 1.0)) throw std::invalid_argument("T must lie in (0, 1)");
  if (!(C > 0.0 && C < 1.0)) throw std::invalid_argument("C must lie in (0, 1)");
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  if (!(step_size > 0.0)) throw std::invalid_argument("step_size must be positive");
}

NormalizedLossMatrix normalize_losses(const LossMatrix& F) {
  NormalizedLossMatrix out{F.losses, Mat(F.m(), F.K())};
  for (std::size_t i = 0; i < F.m(); ++i) {
    const auto row = F.values.row(i);
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) continue;
    for (std::size_t k = 0; k < F.K(); ++k) out.values(i, k) = (row[k] - *lo) / range;
  }
  return out;
}

RelaxedValue relaxed_objective(const NormalizedLossMatrix& Fbar, std::span<const double> beta,
                               const MinerConfig& cfg) {
  if (beta.size() != Fbar.K()) throw std::invalid_argument("beta length does not match K");
  if (!(cfg.mu > 0.0)) throw std::invalid_argument("mu must be positive");
  RelaxedValue r;
  r.grad.assign(beta.size(), cfg.lambda);
  Vec weighted(Fbar.K());
  for (std::size_t i = 0; i < Fbar.m(); ++i) {
    const auto f = Fbar.values.row(i);
    for (std::size_t k = 0; k < f.size(); ++k) weighted[k] = beta[k] * f[k];
    r.value += log_sum_exp(f, cfg.mu) - log_sum_exp(weighted, cfg.mu);
    const Vec s = smooth_max_weights(weighted, cfg.mu);
    for (std::size_t k = 0; k < f.size(); ++k) r.grad[k] -= s[k] * f[k];
  }
  for (double b : beta) r.value += cfg.lambda * b;
  return r;
}

bool lexicographically_first(const Selection& a, const Selection& b) {
  for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
    if (a[k] != b[k]) return a[k] > b[k];
  }
  return false;
}

Selection mine_dominant(const NormalizedLossMatrix& Fbar, const MinerConfig& cfg) {
  cfg.validate();
  const std::size_t K = Fbar.K();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Selection best;
  double best_v = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start <= cfg.extra_starts; ++start) {
    Vec beta(K, 1.0);
    if (start > 0) {
      for (double& b : beta) b = unif(rng);
    }
    const Vec relaxed = descend(Fbar, std::move(beta), cfg);
    Selection s(K);
    for (std::size_t k = 0; k < K; ++k) s[k] = relaxed[k] >= cfg.T ? 1 : 0;
    const double v = binary_objective(Fbar, s, cfg);
    if (!std::isfinite(v)) throw NumericError("miner: non-finite objective");
    if (better(v, s, best_v, best)) {
      best = std::move(s);
      best_v = v;
    }
  }
  return best;
}

Selection exhaustive_dominant(const NormalizedLossMatrix& Fbar, const MinerConfig& cfg) {
  const std::size_t K = Fbar.K();
  if (K > 20) throw std::invalid_argument("exhaustive_dominant: K too large to enumerate");
  Selection best;
  double best_v = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << K); ++mask) {
    Selection s(K);
    // Bit (K-1-k) holds member k so enumeration runs in lexicographic order.
    for (std::size_t k = 0; k < K; ++k) s[k] = static_cast<int>((mask >> (K - 1 - k)) & 1U);
    const double v = binary_objective(Fbar, s, cfg);
    if (better(v, s, best_v, best)) {
      best = std::move(s);
      best_v = v;
    }
  }
  return best;
}

PatternRecord extract_patterns(const NormalizedLossMatrix& Fbar, const Selection& beta,
                               const MinerConfig& cfg) {
  if (beta.size() != Fbar.K()) throw std::invalid_argument("beta length does not match K");
  PatternRecord rec;
  rec.beta.assign(beta.size(), 0);
  Vec row_max(Fbar.m());
  for (std::size_t i = 0; i < Fbar.m(); ++i) row_max[i] = max_of(Fbar.values.row(i));
  for (std::size_t k = 0; k < beta.size(); ++k) {
    if (beta[k] == 0) continue;
    DominantExample ex{k, {}};
    for (std::size_t i = 0; i < Fbar.m(); ++i) {
      if (row_max[i] > 0.0 && Fbar.values(i, k) > cfg.C * row_max[i]) {
        ex.contributes.push_back(Fbar.losses[i]);
      }
    }
    if (ex.contributes.empty()) continue;
    std::sort(ex.contributes.begin(), ex.contributes.end());
    rec.beta[k] = 1;
    rec.dominant.push_back(std::move(ex));
  }
  return rec;
}

std::string pattern_key(const std::vector<LossId>& ids) {
  std::string key;
  for (const LossId& id : ids) {
    if (!key.empty()) key += '+';
    key += std::to_string(id.value());
  }
  return key;
}

PatternHistogram aggregate_patterns(const std::vector<PatternRecord>& records,
                                    const std::vector<LossId>& losses, double min_percent) {
  std::map<std::string, std::size_t> counts;
  PatternHistogram hist;
  std::vector<LossId> everything = losses;
  std::sort(everything.begin(), everything.end());
  const std::string all_key = pattern_key(everything);
  for (const PatternRecord& rec : records) {
    for (const DominantExample& ex : rec.dominant) {
      ++counts[pattern_key(ex.contributes)];
      ++hist.total;
    }
  }
  for (const auto& [key, n] : counts) {
    const double pct = 100.0 * static_cast<double>(n) / static_cast<double>(hist.total);
    hist.patterns.push_back({key, n, pct});
    if (key == all_key) hist.all_losses_percent = pct;
  }
  std::stable_sort(hist.patterns.begin(), hist.patterns.end(),
                   [](const PatternCount& a, const PatternCount& b) { return a.count > b.count; });
  for (const PatternCount& p : hist.patterns) {
    if (p.percent >= min_percent) hist.filtered.push_back(p);
  }
  return hist;
}

PatternRecord mine_point(const LossMatrix& F, const MinerConfig& cfg) {
  const NormalizedLossMatrix Fbar = normalize_losses(F);
  return extract_patterns(Fbar, mine_dominant(Fbar, cfg), cfg);
}

}  // namespace mos
