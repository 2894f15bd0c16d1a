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

#ifndef MOS_HARNESS_HPP_
#define MOS_HARNESS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mos/attack.hpp"
#include "mos/classifier.hpp"
#include "mos/miner.hpp"

#include "json.hpp"

namespace mos {

enum class AttackKind {
  kMos,         // set attack over `losses` with set size K
  kApgd,        // single-loss APGD on losses[0]
  kApgdAll,     // best of one APGD run per loss
  kUpperBound,  // best of APGD over losses x restarts, plus any `include` rows
};

struct AttackSpec {
  std::string name;
  AttackKind kind = AttackKind::kMos;
  AttackConfig cfg;
  std::vector<std::string> include;  // upper bound only

  // K for set attacks, restarts otherwise.
  std::size_t budget() const;
};

struct DatasetSpec {
  std::uint64_t seed = 7;
  std::size_t n_train = 1500;
  std::size_t n_eval = 500;
  std::size_t d = 2;
  std::size_t num_classes = 3;
  double spread = 0.1;
};

struct ModelSpec {
  std::vector<std::size_t> hidden{16, 16};
  bool adversarial = false;
  double epsilon = 0.1;
  std::uint64_t seed = 7;
  std::size_t epochs = 60;
  double step_size = 0.1;
  std::size_t batch_size = 32;
  std::optional<std::filesystem::path> weights;  // load instead of training
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ModelSpec model;
  std::vector<AttackSpec> attacks;
  MinerConfig miner;
  std::size_t trace_points = 3;
  std::optional<std::filesystem::path> output_dir;
  int workers = 0;  // 0: MOS_NUM_WORKERS or the OpenMP default
};

struct ResultsRow {
  std::string attack;
  std::size_t budget = 0;
  double asr_percent = 0.0;
  double mean_iterations = 0.0;
  double wall_seconds = 0.0;

  // Equality on everything except wall time.
  bool same_result(const ResultsRow& o) const;
};

struct ResultsTable {
  std::vector<ResultsRow> rows;

  const ResultsRow* find(const std::string& attack) const;
  bool same_results(const ResultsTable& o) const;
};

// Outcome of one attack spec on one evaluation point.
struct PointResult {
  bool clean_error = false;
  bool success = false;  // includes clean errors
  std::size_t iterations = 0;
  bool failed = false;
  std::string failure;
  std::optional<LossMatrix> best_losses;  // set attacks
};

struct AttackRun {
  AttackSpec spec;
  std::vector<PointResult> points;
  std::vector<AttackOutcome> traced;  // first trace_points outcomes
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  ClassifierWeights model;
  double clean_accuracy = 0.0;
  Dataset eval;
  std::vector<AttackRun> runs;
  ResultsTable table;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json attack_config_to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const nlohmann::json& j, const AttackConfig& defaults = {});

// Number of worker threads: explicit > 0, else MOS_NUM_WORKERS, else OpenMP default.
int resolve_workers(int requested);

std::pair<Dataset, Dataset> make_experiment_data(const DatasetSpec& spec);
TrainingResult build_model(const ModelSpec& spec, const Dataset& train);

// Runs one attack spec over all points. Per-point seeds come from
// derive_seed(cfg.seed, point index, restart), so the parallel policy gives
// the same per-point results as the serial reference.
std::vector<PointResult> sweep_points(const ClassifierWeights& model,
                                      const std::vector<LabeledPoint>& points,
                                      const AttackSpec& spec,
                                      ExecPolicy policy = ExecPolicy::kParallel,
                                      std::vector<AttackOutcome>* traced = nullptr,
                                      std::size_t trace_points = 0);

double attack_success_rate(const std::vector<PointResult>& points);

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                ExecPolicy policy = ExecPolicy::kParallel);
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

// "# mos-results v1" + header + rows.
std::string results_to_csv(const ResultsTable& table);
ResultsTable results_from_csv(const std::string& text);
nlohmann::json results_to_json(const ResultsTable& table);

// Per-point loss matrices, as written by the attack subcommand.
struct LossMatrixRecord {
  std::size_t index = 0;
  std::size_t label = 0;
  LossMatrix F;
};
nlohmann::json loss_matrices_to_json(const std::string& attack,
                                     const std::vector<LossMatrixRecord>& records);
std::vector<LossMatrixRecord> loss_matrices_from_json(const nlohmann::json& j);
std::string loss_matrices_to_csv(const std::vector<LossMatrixRecord>& records);
std::vector<LossMatrixRecord> loss_matrices_from_csv(const std::string& text);
std::vector<LossMatrixRecord> load_loss_matrices(const std::filesystem::path& path);

PatternHistogram run_miner(const std::vector<LossMatrixRecord>& records, const MinerConfig& cfg,
                           ExecPolicy policy = ExecPolicy::kParallel);
nlohmann::json patterns_to_json(const PatternHistogram& hist);

struct ProbeRow {
  std::size_t K = 0;
  std::size_t m = 0;
  double set_seconds = 0.0;     // one grad_set_objective call
  double single_seconds = 0.0;  // K grad_single_loss calls
  double ratio = 0.0;
};

// Wall time of one set gradient at each K versus K independent single-loss
// gradients: medians over paired repeats. Uses the serial kernels.
std::vector<ProbeRow> gradient_cost_probe(const ClassifierWeights& model,
                                          const std::vector<std::size_t>& Ks,
                                          const std::vector<LossId>& losses,
                                          std::size_t repeats = 5, std::uint64_t seed = 1);
std::string probe_to_csv(const std::vector<ProbeRow>& rows);

// Merges the results.csv of several run directories.
struct MergedReport {
  std::string wide_csv;  // one row per run, one ASR column per attack
  std::string long_csv;  // run,attack,budget,asr_percent,mean_iterations,wall_seconds
};
MergedReport merge_reports(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace mos

#endif  // MOS_HARNESS_HPP_
