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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mos/attack.hpp"
#include "mos/harness.hpp"
#include "test_util.hpp"

using namespace mos;

namespace {

const ClassifierWeights& toy_model() {
  static const ClassifierWeights w = [] {
    const auto [train, eval] = make_experiment_data(DatasetSpec{});
    TrainingConfig cfg;
    cfg.dims = {2, 16, 16, 3};
    cfg.epochs = 20;
    return train_toy(cfg, train).weights;
  }();
  return w;
}

const Dataset& toy_eval() {
  static const Dataset eval = make_experiment_data(DatasetSpec{}).second;
  return eval;
}

struct Recorder {
  std::vector<Mat> X;
  std::vector<Mat> X_max;
  std::vector<double> g, g_max, eta;
  std::vector<std::size_t> iteration;
  std::vector<bool> checkpoint, halved;
  AttackObserver observer() {
    return [this](const IterationView& v) {
      X.push_back(v.X);
      X_max.push_back(v.X_max);
      g.push_back(v.g);
      g_max.push_back(v.g_max);
      eta.push_back(v.eta);
      iteration.push_back(v.iteration);
      checkpoint.push_back(v.checkpoint);
      halved.push_back(v.halved);
    };
  }
};

double feasibility_violation(const Mat& X, std::span<const double> x, double eps) {
  double worst = 0.0;
  for (std::size_t k = 0; k < X.rows(); ++k) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double v = X(k, j);
      worst = std::max({worst, std::abs(v - x[j]) - eps, -v, v - 1.0});
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("project_set examples") {
  Mat a(1, 1, Vec{0.75});
  project_set(a, Vec{0.5}, 0.1);
  CHECK(a(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  Mat b(1, 1, Vec{-0.2});
  project_set(b, Vec{0.05}, 0.1);
  CHECK(b(0, 0) == 0.0);
  Mat c(2, 2, Vec{0.45, 0.5, 0.55, 0.6});
  const Mat before = c;
  project_set(c, Vec{0.5, 0.55}, 0.1);
  CHECK(c == before);
  project_set(c, Vec{0.5, 0.55}, 0.1);
  CHECK(c == before);
}

TEST_CASE("checkpoint schedules") {
  CHECK(checkpoint_schedule(50) == std::vector<std::size_t>{0, 11, 21, 29, 35, 40, 44, 47, 50});
  CHECK(checkpoint_schedule(100) ==
        std::vector<std::size_t>{0, 22, 41, 57, 70, 80, 87, 93, 99, 100});
  CHECK(checkpoint_schedule(1) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("count_increases on a crafted sequence") {
  const Vec g{0, 1, 1, 2, 1, 3, 3, 4};
  CHECK(count_increases(g, 0, 7) == 4);
  CHECK(count_increases(g, 0, 5) == 3);
  CHECK(count_increases(g, 1, 3) == 1);
  CHECK(count_increases(g, 5, 6) == 0);
  CHECK(count_increases(g, 6, 7) == 1);
}

TEST_CASE("stalled objective halves at every checkpoint") {
  // Constant objective: no strict increases, so condition 1 fires each time.
  SetEvaluator flat = [](const Mat& X) {
    return SetEvaluation{1.0, Mat(X.rows(), X.cols(), 1.0), std::vector<std::size_t>(X.rows(), 0)};
  };
  AttackConfig cfg;
  cfg.n_iter = 50;
  Recorder rec;
  const Vec x{0.5, 0.5};
  const AttackOutcome out =
      run_momentum_ascent(flat, x, 0, Mat(1, 2, Vec{0.5, 0.5}), cfg, rec.observer());
  CHECK_FALSE(out.success);
  const auto sched = checkpoint_schedule(50);
  std::size_t halvings = 0;
  for (std::size_t t = 0; t < rec.eta.size(); ++t) {
    if (rec.halved[t]) ++halvings;
    CHECK(rec.halved[t] == rec.checkpoint[t]);
  }
  // Every checkpoint after w_0 is reached inside the loop except w_n = n_iter.
  CHECK(halvings == sched.size() - 2);
  CHECK(rec.eta.back() == cfg.initial_step() / std::pow(2.0, static_cast<double>(halvings)));
}

TEST_CASE("increasing objective never halves") {
  // Value grows with the sum of coordinates, and the iterate keeps moving until
  // the box stops it; after that condition 2 or 1 may fire, but not before.
  SetEvaluator up = [](const Mat& X) {
    double s = 0.0;
    for (double v : X.values()) s += v;
    return SetEvaluation{s, Mat(X.rows(), X.cols(), 1.0), std::vector<std::size_t>(X.rows(), 0)};
  };
  AttackConfig cfg;
  cfg.epsilon = 0.5;
  cfg.eta0 = 0.001;
  cfg.n_iter = 50;
  Recorder rec;
  run_momentum_ascent(up, Vec{0.5}, 0, Mat(1, 1, Vec{0.0}), cfg, rec.observer());
  for (bool h : rec.halved) CHECK_FALSE(h);
}

TEST_CASE("ascent invariants over seeded runs") {
  const ClassifierWeights& model = toy_model();
  const Dataset& eval = toy_eval();
  AttackConfig cfg;
  cfg.n_iter = 50;
  cfg.K = 3;
  std::set<std::size_t> ckpt;
  for (std::size_t w : checkpoint_schedule(cfg.n_iter)) ckpt.insert(w);
  for (std::size_t run = 0; run < 30; ++run) {
    const LabeledPoint& pt = eval.points[run];
    cfg.seed = run;
    cfg.mu = run % 3 == 0 ? 0.1 : 1.0;
    Recorder rec;
    const AttackOutcome out = mos_attack(model, pt, cfg, rec.observer());
    REQUIRE_FALSE(out.failed);
    REQUIRE(rec.X.size() == cfg.n_iter + 1);
    for (std::size_t t = 0; t < rec.X.size(); ++t) {
      CHECK(feasibility_violation(rec.X[t], pt.x, cfg.epsilon) <= 1e-12);
      if (t > 0) {
        CHECK(rec.g_max[t] >= rec.g_max[t - 1]);
        CHECK(rec.eta[t] <= rec.eta[t - 1]);
        if (rec.eta[t] != rec.eta[t - 1]) {
          CHECK(rec.eta[t] == rec.eta[t - 1] / 2.0);
          CHECK(rec.halved[t]);
        }
      }
      if (rec.halved[t]) {
        // The decision after loop step k is reported with iterate k + 1.
        CHECK(ckpt.count(rec.iteration[t] - 1) == 1);
        CHECK(rec.X[t] == rec.X_max[t]);
      }
    }
    // X_max attains g_max.
    const double g_best = set_objective_simplified(
        loss_matrix(model, pt, PerturbationSet(out.best_delta), cfg.losses), cfg.mu);
    CHECK(std::abs(g_best - out.g_max) <= 1e-9);
    CHECK(out.best_losses.values ==
          loss_matrix(model, pt, PerturbationSet(out.best_delta), cfg.losses).values);
  }
}

TEST_CASE("permuting the start permutes the result") {
  const ClassifierWeights& model = toy_model();
  const LabeledPoint& pt = toy_eval().points[3];
  AttackConfig cfg;
  cfg.K = 3;
  cfg.n_iter = 30;
  const PerturbationSet start = random_start(3, 2, cfg.epsilon, 5);
  PerturbationSet permuted(3, 2);
  const std::size_t perm[3] = {2, 0, 1};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 2; ++j) permuted.deltas(k, j) = start.deltas(perm[k], j);
  }
  const AttackOutcome a = mos_attack_from(model, pt, cfg, start);
  const AttackOutcome b = mos_attack_from(model, pt, cfg, permuted);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::abs(b.final_delta(k, j) - a.final_delta(perm[k], j)) <= 1e-12);
    }
  }
  CHECK(std::abs(a.g_max - b.g_max) <= 1e-12);
}

TEST_CASE("zero budget returns the clean input") {
  const ClassifierWeights& model = toy_model();
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  cfg.eta0 = 0.05;
  cfg.K = 2;
  for (std::size_t i = 0; i < 40; ++i) {
    const LabeledPoint& pt = toy_eval().points[i];
    const AttackOutcome out = mos_attack(model, pt, cfg);
    for (double v : out.final_delta.values()) CHECK(v == 0.0);
    CHECK(out.success == (predict(model, pt.x) != pt.y));
  }
}

TEST_CASE("constant-logit model") {
  ClassifierWeights w = zero_weights({2, 4, 3});
  w.layers[1].bias = {0.3, 1.2, -0.4};
  const LabeledPoint pt{{0.4, 0.6}, 1};
  AttackConfig cfg;
  cfg.K = 4;
  Recorder rec;
  const AttackOutcome out = mos_attack(w, pt, cfg, rec.observer());
  CHECK_FALSE(out.success);
  for (double g : rec.g) CHECK(g == rec.g.front());
  for (const Mat& X : rec.X) CHECK(feasibility_violation(X, pt.x, cfg.epsilon) <= 1e-12);
}

TEST_CASE("single-member cross entropy reproduces APGD") {
  const ClassifierWeights& model = toy_model();
  AttackConfig cfg;
  cfg.K = 1;
  cfg.losses = {LossId(0)};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    cfg.mu = seed % 2 ? 0.1 : 3.0;
    const LabeledPoint& pt = toy_eval().points[seed * 7];
    Recorder a, b;
    mos_attack(model, pt, cfg, a.observer());
    apgd_single(model, pt, LossId(0), cfg, b.observer());
    REQUIRE(a.X.size() == b.X.size());
    for (std::size_t t = 0; t < a.X.size(); ++t) {
      CHECK(testing::max_abs_diff(a.X[t].values(), b.X[t].values()) <= 1e-9);
    }
  }
}

TEST_CASE("early stop ends at the first success") {
  const ClassifierWeights& model = toy_model();
  AttackConfig cfg;
  cfg.K = 4;
  cfg.early_stop = true;
  cfg.epsilon = 0.3;
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    const AttackOutcome out = mos_attack(model, toy_eval().points[i], cfg);
    if (out.success) {
      CHECK(out.trace.back().iteration == *out.success_iteration);
      ++stopped;
    }
  }
  CHECK(stopped > 0);
}

TEST_CASE("ensemble_best") {
  std::vector<AttackOutcome> outs(3);
  CHECK_FALSE(ensemble_best(outs));
  outs[1].success = true;
  CHECK(ensemble_best(outs));
  CHECK_FALSE(ensemble_best(std::span<const AttackOutcome>{}));
}

TEST_CASE("config validation") {
  AttackConfig cfg;
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.K = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.rho = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(AttackConfig{}.initial_step() == 0.2);
}

TEST_CASE("derive_seed separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t p = 0; p < 100; ++p) {
    for (std::uint64_t r = 0; r < 5; ++r) seen.insert(derive_seed(11, p, r));
  }
  CHECK(seen.size() == 500);
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}
