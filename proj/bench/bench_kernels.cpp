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

// Serial reference vs OpenMP kernels: the K-row set gradient and the
// per-point attack sweep.

#include <benchmark/benchmark.h>

#include <random>

#include "mos/harness.hpp"
#include "mos/objective.hpp"

namespace {

using namespace mos;

const ClassifierWeights& wide_model() {
  static const ClassifierWeights w = init_weights({64, 128, 128, 10}, 3);
  return w;
}

void BM_SetGradient(benchmark::State& state, ExecPolicy policy) {
  const auto K = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LabeledPoint pt{Vec(64), 0};
  for (double& v : pt.x) v = u(rng);
  PerturbationSet set(K, 64);
  for (double& v : set.deltas.values()) v = 0.1 * (2.0 * u(rng) - 1.0);
  const auto losses = all_losses();
  for (auto _ : state) {
    benchmark::DoNotOptimize(grad_set_objective(wide_model(), pt, set, losses, 1.0, policy));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(K));
}

void BM_Sweep(benchmark::State& state, ExecPolicy policy) {
  static const auto data = make_experiment_data(DatasetSpec{.n_train = 300, .n_eval = 64});
  static const ClassifierWeights model = [] {
    ModelSpec spec;
    spec.epochs = 10;
    return build_model(spec, data.first).weights;
  }();
  AttackSpec spec;
  spec.name = "MOS-8";
  spec.cfg.K = static_cast<std::size_t>(state.range(0));
  spec.cfg.n_iter = 20;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sweep_points(model, data.second.points, spec, policy));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(data.second.points.size()));
}

BENCHMARK_CAPTURE(BM_SetGradient, serial, ExecPolicy::kSerial)->Arg(1)->Arg(8)->Arg(32);
BENCHMARK_CAPTURE(BM_SetGradient, parallel, ExecPolicy::kParallel)->Arg(1)->Arg(8)->Arg(32);
BENCHMARK_CAPTURE(BM_Sweep, serial, ExecPolicy::kSerial)->Arg(1)->Arg(8)->UseRealTime();
BENCHMARK_CAPTURE(BM_Sweep, parallel, ExecPolicy::kParallel)->Arg(1)->Arg(8)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
