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

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "mos/attack.hpp"
#include "mos/harness.hpp"
#include "mos/miner.hpp"
#include "mos/objective.hpp"
#include "test_util.hpp"

using namespace mos;
using testing::uniform_vec;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double budget_seconds,
               const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_seconds) {
    v.pass = false;
    v.detail += " (over time budget)";
  }
  if (!v.pass) ++failures;
  std::printf("%s [%2d] %s: %s [%.2fs / %.0fs]\n", v.pass ? "PASS" : "FAIL", id, title,
              v.detail.c_str(), secs, budget_seconds);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}
std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}
std::string fmt(const char* f, double a, double b, double c) {
  char buf[192];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

LossMatrix random_matrix(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  LossMatrix F;
  const std::size_t m = dim(rng), K = dim(rng);
  for (std::size_t i = 0; i < m; ++i) F.losses.emplace_back(static_cast<int>(i));
  F.values = Mat(m, K, uniform_vec(rng, m * K, lo, hi));
  return F;
}

Verdict smoothing_bounds() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> len(1, 16);
  double worst = 0.0;
  for (double mu : {0.1, 1.0, 10.0}) {
    for (int t = 0; t < 1000; ++t) {
      const Vec xs = uniform_vec(rng, len(rng), -10, 10);
      const double n = static_cast<double>(xs.size());
      double mx = xs[0], mn = xs[0];
      for (double v : xs) {
        mx = std::max(mx, v);
        mn = std::min(mn, v);
      }
      const double up = smooth_max(xs, mu) - mx;
      const double dn = mn - smooth_min(xs, mu);
      const double cap = mu * std::log(n);
      worst = std::max({worst, -up, up - cap, -dn, dn - cap});
    }
  }
  return {worst <= 1e-9, fmt("worst bound violation %.3g", worst)};
}

Verdict objective_identity() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  bool exact_ok = true;
  for (double mu : {0.1, 1.0, 10.0}) {
    for (int t = 0; t < 1000; ++t) {
      const LossMatrix F = random_matrix(rng, -5, 5);
      Vec rows;
      for (std::size_t i = 0; i < F.m(); ++i) rows.push_back(smooth_max(F.values.row(i), mu));
      const double g = set_objective_simplified(F, mu);
      worst = std::max(worst, std::abs(g - smooth_min(rows, mu)) / std::max(1.0, std::abs(g)));
      LossMatrix one{{LossId(0)}, Mat(1, 1, F.values(0, 0))};
      exact_ok &= set_objective_simplified(one, mu) == F.values(0, 0);
    }
  }
  return {worst <= 1e-12 && exact_ok,
          fmt("max composition gap %.3g, singleton exact: ", worst) + (exact_ok ? "yes" : "no")};
}

Verdict sandwich() {
  std::mt19937_64 rng(3);
  double worst = -INFINITY;
  for (double mu : {0.1, 1.0, 10.0}) {
    for (int t = 0; t < 1000; ++t) {
      const LossMatrix F = random_matrix(rng, 0, 10);
      const double exact = set_objective_exact(F, ScalarizationParams::uniform(F.m(), mu));
      const double g = set_objective_simplified(F, mu);
      const double cap = mu * (std::log(static_cast<double>(F.m())) +
                               std::log(static_cast<double>(F.K())));
      worst = std::max(worst, std::abs(g - exact) - cap);
    }
  }
  return {worst <= 1e-9, fmt("max (|gap| - bound) %.3g", worst)};
}

Verdict gradient_fidelity() {
  std::mt19937_64 rng(4);
  const std::vector<LossId> losses = all_losses();
  double worst = 0.0;
  int rejected = 0;
  std::uint64_t seed = 1000;
  for (double mu : {0.1, 1.0, 10.0}) {
    int cases = 0;
    while (cases < 20) {
      const std::size_t d = 2 + static_cast<std::size_t>(cases % 4);
      const std::size_t C = 3 + static_cast<std::size_t>(cases % 2);
      const ClassifierWeights model = init_weights({d, 12, 12, C}, seed++);
      const LabeledPoint pt{uniform_vec(rng, d, 0.15, 0.85), seed % C};
      const std::size_t K = 1 + static_cast<std::size_t>(cases % 4);
      const Vec flat = uniform_vec(rng, K * d, -0.1, 0.1);
      auto fn = [&](std::span<const double> v) {
        const PerturbationSet set(Mat(K, d, Vec(v.begin(), v.end())));
        return set_objective_simplified(loss_matrix(model, pt, set, losses), mu);
      };
      // Tie neighbourhoods: close logits, or a kink inside the stencil.
      bool near_tie = false;
      for (std::size_t k = 0; k < K; ++k) {
        Vec xk = pt.x;
        for (std::size_t j = 0; j < d; ++j) xk[j] += flat[k * d + j];
        near_tie |= testing::min_gap(forward(model, xk)) < 1e-3;
      }
      const Vec fd = finite_diff_grad(fn, flat, 1e-5);
      near_tie |= testing::max_abs_diff(fd, finite_diff_grad(fn, flat, 1e-6)) >
                  1e-5 * testing::norm2(fd);
      if (near_tie) {
        ++rejected;
        continue;
      }
      ++cases;
      const SetGradient sg =
          grad_set_objective(model, pt, PerturbationSet(Mat(K, d, flat)), losses, mu);
      worst = std::max(worst, testing::rel_err(sg.grads.values(), fd));
    }
  }
  return {worst <= 1e-4, fmt("60 cases, max relative error %.3g, %g tie draws rejected", worst,
                             static_cast<double>(rejected))};
}

const ClassifierWeights& quick_model() {
  static const ClassifierWeights w = [] {
    const auto data = make_experiment_data(DatasetSpec{});
    ModelSpec spec;
    spec.adversarial = true;
    spec.epochs = 20;
    return build_model(spec, data.first).weights;
  }();
  return w;
}

const Dataset& eval_points() {
  static const Dataset eval = make_experiment_data(DatasetSpec{}).second;
  return eval;
}

Verdict ascent_invariants() {
  const bool sched_ok =
      checkpoint_schedule(50) == std::vector<std::size_t>{0, 11, 21, 29, 35, 40, 44, 47, 50} &&
      checkpoint_schedule(100) ==
          std::vector<std::size_t>{0, 22, 41, 57, 70, 80, 87, 93, 99, 100};
  const ClassifierWeights& model = quick_model();
  double worst_feas = 0.0;
  bool monotone = true, eta_ok = true, reset_ok = true;
  std::size_t halvings = 0;
  for (std::size_t run = 0; run < 100; ++run) {
    AttackConfig cfg;
    cfg.n_iter = run % 2 ? 100 : 50;
    cfg.K = 1 + run % 5;
    cfg.mu = run % 3 == 0 ? 0.1 : (run % 3 == 1 ? 1.0 : 10.0);
    cfg.seed = run;
    std::set<std::size_t> ckpt;
    for (std::size_t w : checkpoint_schedule(cfg.n_iter)) ckpt.insert(w);
    const LabeledPoint& pt = eval_points().points[run];
    double prev_gmax = -INFINITY, prev_eta = INFINITY;
    mos_attack(model, pt, cfg, [&](const IterationView& v) {
      for (std::size_t k = 0; k < v.X.rows(); ++k) {
        for (std::size_t j = 0; j < pt.x.size(); ++j) {
          const double x = v.X(k, j);
          worst_feas = std::max({worst_feas, std::abs(x - pt.x[j]) - cfg.epsilon, -x, x - 1.0});
        }
      }
      monotone &= v.g_max >= prev_gmax;
      if (v.eta != prev_eta && prev_eta != INFINITY) {
        // Decision after loop step k is reported with iterate k + 1.
        eta_ok &= v.halved && v.eta == prev_eta / 2.0 && ckpt.count(v.iteration - 1) == 1;
      }
      eta_ok &= v.eta <= prev_eta;
      if (v.halved) {
        ++halvings;
        reset_ok &= v.X == v.X_max;
      }
      prev_gmax = v.g_max;
      prev_eta = v.eta;
    });
  }
  const bool ok = sched_ok && worst_feas <= 1e-12 && monotone && eta_ok && reset_ok;
  return {ok, fmt("feasibility slack %.3g, %g halvings", worst_feas, static_cast<double>(halvings)) +
                  ", schedules " + (sched_ok ? "exact" : "WRONG") +
                  (monotone ? "" : ", g_max decreased") + (eta_ok ? "" : ", bad step change") +
                  (reset_ok ? "" : ", restart not at X_max")};
}

Verdict apgd_reduction() {
  const ClassifierWeights& model = quick_model();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AttackConfig cfg;
    cfg.K = 1;
    cfg.losses = {LossId(0)};
    cfg.seed = seed;
    cfg.mu = 0.1 * static_cast<double>(seed + 1);
    const LabeledPoint& pt = eval_points().points[seed * 11];
    std::vector<Vec> a, b;
    mos_attack(model, pt, cfg, [&](const IterationView& v) { a.push_back(v.X.values()); });
    apgd_single(model, pt, LossId(0), cfg,
                [&](const IterationView& v) { b.push_back(v.X.values()); });
    if (a.size() != b.size()) return {false, "trajectory lengths differ"};
    for (std::size_t t = 0; t < a.size(); ++t) worst = std::max(worst, testing::max_abs_diff(a[t], b[t]));
  }
  return {worst <= 1e-9, fmt("20 seeds, max coordinate gap %.3g", worst)};
}

// The seeded small-scale experiment shared by criteria 7 and 8.
const ExperimentResult& toy_experiment() {
  static const ExperimentResult res = [] {
    nlohmann::json attacks = nlohmann::json::array();
    for (int id = 0; id < 8; ++id) {
      attacks.push_back({{"name", "APGD-" + std::to_string(id)}, {"kind", "apgd"},
                         {"losses", {id}}});
    }
    attacks.push_back({{"name", "MOS-8(5)"}, {"kind", "mos"}, {"K", 5}});
    attacks.push_back({{"name", "MOS-8(8)"}, {"kind", "mos"}, {"K", 8}});
    attacks.push_back({{"name", "UB(8x5)"}, {"kind", "upper_bound"}, {"restarts", 5}});
    const nlohmann::json j = {
        {"dataset", {{"seed", 7}, {"n_train", 1500}, {"n_eval", 500}, {"d", 2}, {"classes", 3},
                     {"spread", 0.1}}},
        {"model", {{"hidden", {16, 16}}, {"adversarial", true}, {"epsilon", 0.1}, {"seed", 7},
                   {"epochs", 60}}},
        {"attack_defaults", {{"epsilon", 0.1}, {"n_iter", 50}, {"mu", 1.0}, {"seed", 11}}},
        {"attacks", attacks},
        {"trace_points", 0}};
    return run_experiment(parse_experiment_config(j));
  }();
  return res;
}

Verdict mos_vs_single_loss() {
  const ResultsTable& t = toy_experiment().table;
  const double ce = t.find("APGD-0")->asr_percent;
  double best = 0.0;
  for (int id = 0; id < 8; ++id) best = std::max(best, t.find("APGD-" + std::to_string(id))->asr_percent);
  const double mos5 = t.find("MOS-8(5)")->asr_percent;
  return {mos5 >= ce && mos5 >= best - 2.0,
          fmt("MOS-8(5) %.1f%%, APGD-CE %.1f%%, best single-loss %.1f%%", mos5, ce, best) +
              fmt(", clean error %.1f%%", t.find("clean")->asr_percent)};
}

Verdict mos_vs_upper_bound() {
  const ResultsTable& t = toy_experiment().table;
  const double mos8 = t.find("MOS-8(8)")->asr_percent;
  const double ub = t.find("UB(8x5)")->asr_percent;
  return {mos8 >= ub - 2.0, fmt("MOS-8(8) %.1f%%, upper bound %.1f%%, gap %.1fpp", mos8, ub, ub - mos8)};
}

Verdict miner_agreement() {
  std::mt19937_64 rng(9);
  MinerConfig cfg;
  int agree = 0;
  for (int t = 0; t < 100; ++t) {
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    const std::size_t m = dim(rng), K = dim(rng);
    NormalizedLossMatrix F;
    for (std::size_t i = 0; i < m; ++i) F.losses.emplace_back(static_cast<int>(i));
    F.values = Mat(m, K, uniform_vec(rng, m * K, 0, 1));
    cfg.seed = static_cast<std::uint64_t>(t);
    agree += mine_dominant(F, cfg) == exhaustive_dominant(F, cfg);
  }
  MinerConfig p;
  p.mu = 0.05;
  p.lambda = 0.5;
  NormalizedLossMatrix spec{{LossId(0), LossId(1)}, Mat(2, 2, Vec{1, 0, 0, 1})};
  const bool planted1 =
      mine_dominant(spec, p) == Selection{1, 1} && exhaustive_dominant(spec, p) == Selection{1, 1};
  p.lambda = 1.0;
  NormalizedLossMatrix gen{{LossId(0), LossId(1)}, Mat(2, 2, Vec{1, 0.9, 0.9, 1})};
  const Selection g = mine_dominant(gen, p);
  const bool planted2 = g == exhaustive_dominant(gen, p) && g[0] + g[1] == 1;
  return {agree >= 90 && planted1 && planted2,
          fmt("%g/100 random matrices agree", agree) + ", planted " +
              (planted1 && planted2 ? "2/2" : "FAILED")};
}

Verdict pattern_extraction() {
  MinerConfig cfg;  // T 0.85, C 0.75, lambda 1
  const NormalizedLossMatrix specialists{{LossId(0), LossId(1)}, Mat(2, 2, Vec{1, 0, 0, 1})};
  const PatternRecord r = extract_patterns(specialists, Selection{1, 1}, cfg);
  const bool disjoint = r.dominant.size() == 2 && pattern_key(r.dominant[0].contributes) == "0" &&
                        pattern_key(r.dominant[1].contributes) == "1";
  const NormalizedLossMatrix gen{{LossId(0), LossId(1), LossId(2)},
                                 Mat(3, 3, Vec{0.1, 1, 0, 0, 1, 0.4, 0.3, 1, 0})};
  const Selection beta = mine_dominant(gen, cfg);
  const PatternRecord gr = extract_patterns(gen, beta, cfg);
  const bool generalist = gr.dominant.size() == 1 && gr.dominant[0].index == 1 &&
                          pattern_key(gr.dominant[0].contributes) == "0+1+2";
  std::mt19937_64 rng(10);
  std::vector<PatternRecord> recs;
  for (int t = 0; t < 100; ++t) {
    NormalizedLossMatrix F{{LossId(0), LossId(1), LossId(2), LossId(3)},
                           Mat(4, 6, uniform_vec(rng, 24, 0, 1))};
    recs.push_back(extract_patterns(F, Selection{1, 1, 1, 1, 1, 1}, cfg));
  }
  const PatternHistogram h = aggregate_patterns(recs, {LossId(0), LossId(1), LossId(2), LossId(3)});
  double total = 0.0;
  for (const auto& pc : h.patterns) total += pc.percent;
  return {disjoint && generalist && std::abs(total - 100.0) <= 1e-9,
          std::string("specialist masks ") + (disjoint ? "{0},{1}" : "WRONG") +
              ", generalist mask " + (generalist ? "all losses" : "WRONG") +
              fmt(", percentages sum %.12g", total)};
}

Verdict cost_probe() {
  const ClassifierWeights model = init_weights({64, 64, 64, 3}, 7);
  const auto rows = gradient_cost_probe(model, {1, 4, 8}, all_losses(), 5);
  double worst = 0.0;
  std::string detail = "ratios";
  for (const ProbeRow& r : rows) {
    worst = std::max(worst, r.ratio);
    detail += fmt(" K=%g:%.2f", static_cast<double>(r.K), r.ratio);
  }
  return {worst <= 2.0, detail};
}

}  // namespace

int main() {
  criterion(1, "smoothing bounds", 1, smoothing_bounds);
  criterion(2, "objective identity", 1, objective_identity);
  criterion(3, "sandwich bound", 1, sandwich);
  criterion(4, "gradient fidelity", 30, gradient_fidelity);
  criterion(5, "ascent invariants", 120, ascent_invariants);
  criterion(6, "APGD reduction", 60, apgd_reduction);
  criterion(7, "MOS beats single-loss APGD", 600, mos_vs_single_loss);
  criterion(8, "upper-bound gap", 900, mos_vs_upper_bound);
  criterion(9, "miner oracle agreement", 60, miner_agreement);
  criterion(10, "pattern extraction", 1, pattern_extraction);
  criterion(11, "gradient cost", 60, cost_probe);
  std::printf("%s: %d criterion(s) failed\n", failures == 0 ? "OK" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
