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

// Command-line driver: train, attack, mine, probe, report.

#include <omp.h>

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mos/harness.hpp"

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-objective set-based adversarial attacks on small classifiers"};
  app.require_subcommand(1);

  // train
  mos::DatasetSpec data_spec;
  mos::ModelSpec model_spec;
  std::string weights_out = "model.weights";
  std::string data_out;
  auto* train = app.add_subcommand("train", "Generate blobs and train a classifier");
  train->add_option("--data-seed", data_spec.seed, "Dataset seed");
  train->add_option("--n", data_spec.n_train, "Training points");
  train->add_option("--d", data_spec.d, "Input dimension");
  train->add_option("--classes", data_spec.num_classes, "Number of classes");
  train->add_option("--spread", data_spec.spread, "Blob standard deviation");
  train->add_option("--hidden", model_spec.hidden, "Hidden layer widths")->delimiter(',');
  train->add_flag("--adversarial", model_spec.adversarial, "PGD adversarial training");
  train->add_option("--epsilon", model_spec.epsilon, "Adversarial training budget");
  train->add_option("--epochs", model_spec.epochs, "Training epochs");
  train->add_option("--step-size", model_spec.step_size, "SGD step size");
  train->add_option("--seed", model_spec.seed, "Training seed");
  train->add_option("--out", weights_out, "Weight file to write");
  train->add_option("--data-out", data_out, "Optional CSV of the training set");

  // attack
  std::string config_path;
  std::string attack_out;
  bool serial = false;
  int workers = 0;
  auto* attack = app.add_subcommand("attack", "Run an experiment config");
  attack->add_option("--config", config_path, "Experiment JSON")->required();
  attack->add_option("--out", attack_out, "Output directory (overrides the config)");
  attack->add_flag("--serial", serial, "Use the serial reference sweep");
  attack->add_option("--workers", workers, "Worker threads (default: MOS_NUM_WORKERS)");

  // mine
  std::vector<std::string> mine_inputs;
  std::string mine_out = "patterns.json";
  mos::MinerConfig miner_cfg;
  auto* mine = app.add_subcommand("mine", "Mine loss synergistic patterns");
  mine->add_option("--input", mine_inputs, "Loss-matrix files (.json or .csv)")->required();
  mine->add_option("--out", mine_out, "Pattern JSON to write");
  mine->add_option("--lambda", miner_cfg.lambda, "Sparsity weight");
  mine->add_option("--T", miner_cfg.T, "Binarization threshold");
  mine->add_option("--C", miner_cfg.C, "Contribution threshold");
  mine->add_option("--mu", miner_cfg.mu, "Smoothing parameter");
  mine->add_option("--extra-starts", miner_cfg.extra_starts, "Random starts beyond all-ones");
  mine->add_option("--seed", miner_cfg.seed, "Seed for the random starts");

  // probe
  std::string probe_weights;
  std::vector<std::size_t> probe_K{1, 4, 8};
  std::vector<int> probe_losses{0, 1, 2, 3, 4, 5, 6, 7};
  std::size_t probe_d = 64;
  std::size_t repeats = 5;
  std::string probe_out;
  auto* probe = app.add_subcommand("probe", "Time set gradients against single-loss gradients");
  probe->add_option("--weights", probe_weights, "Weight file (default: seeded d-64-64-3 network)");
  probe->add_option("--d", probe_d, "Input dimension of the default toy model");
  probe->add_option("--K", probe_K, "Set sizes")->delimiter(',');
  probe->add_option("--losses", probe_losses, "Loss ids in the set objective")->delimiter(',');
  probe->add_option("--repeats", repeats, "Timing repeats (median is reported)");
  probe->add_option("--out", probe_out, "CSV to write (default: stdout)");

  // report
  std::vector<std::string> run_dirs;
  std::string report_out = "report.csv";
  std::string long_out = "report_long.csv";
  auto* report = app.add_subcommand("report", "Merge attack runs into tables");
  report->add_option("--runs", run_dirs, "Run directories")->required();
  report->add_option("--out", report_out, "Wide table CSV");
  report->add_option("--long", long_out, "Long-format CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      data_spec.n_eval = 0;
      auto [train_set, unused] = mos::make_experiment_data(data_spec);
      const mos::TrainingResult r = mos::build_model(model_spec, train_set);
      mos::save_weights(r.weights, weights_out);
      if (!data_out.empty()) mos::save_dataset_csv(train_set, data_out);
      std::printf("clean accuracy %.4f, weights written to %s\n", r.clean_accuracy,
                  weights_out.c_str());
    } else if (*attack) {
      mos::ExperimentConfig cfg = mos::load_experiment_config(config_path);
      if (workers > 0) cfg.workers = workers;
      if (!attack_out.empty()) cfg.output_dir = attack_out;
      if (!cfg.output_dir) cfg.output_dir = "mos_run";
      const mos::ExperimentResult res = mos::run_experiment(
          cfg, serial ? mos::ExecPolicy::kSerial : mos::ExecPolicy::kParallel);
      mos::write_experiment(res, *cfg.output_dir);
      std::printf("%-16s %8s %10s %10s %10s\n", "attack", "budget", "ASR(%)", "mean_it",
                  "seconds");
      for (const mos::ResultsRow& row : res.table.rows) {
        std::printf("%-16s %8zu %10.2f %10.2f %10.3f\n", row.attack.c_str(), row.budget,
                    row.asr_percent, row.mean_iterations, row.wall_seconds);
      }
      std::printf("results written to %s\n", cfg.output_dir->string().c_str());
    } else if (*mine) {
      std::vector<mos::LossMatrixRecord> records;
      for (const std::string& in : mine_inputs) {
        auto part = mos::load_loss_matrices(in);
        records.insert(records.end(), part.begin(), part.end());
      }
      omp_set_num_threads(mos::resolve_workers(0));
      const mos::PatternHistogram hist = mos::run_miner(records, miner_cfg);
      write_text(mine_out, mos::patterns_to_json(hist).dump(2));
      std::printf("%zu dominant examples over %zu points; all-losses share %.2f%%\n",
                  hist.total, records.size(), hist.all_losses_percent);
      for (const mos::PatternCount& p : hist.filtered) {
        std::printf("  %-24s %6zu  %6.2f%%\n", p.pattern.c_str(), p.count, p.percent);
      }
    } else if (*probe) {
      mos::ClassifierWeights model;
      if (!probe_weights.empty()) {
        model = mos::load_weights(probe_weights);
      } else {
        model = mos::init_weights({probe_d, 64, 64, 3}, 1);
      }
      const auto rows = mos::gradient_cost_probe(model, probe_K, mos::to_loss_ids(probe_losses),
                                                 repeats);
      const std::string csv = mos::probe_to_csv(rows);
      if (probe_out.empty()) {
        std::cout << csv;
      } else {
        write_text(probe_out, csv);
      }
    } else if (*report) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      const mos::MergedReport rep = mos::merge_reports(dirs);
      write_text(report_out, rep.wide_csv);
      write_text(long_out, rep.long_csv);
      std::cout << rep.wide_csv;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
