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

#include "mos/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mos/errors.hpp"

namespace mos {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

std::string slug(const std::string& name) {
  std::string s;
  for (char c : name) {
    s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  }
  return s;
}

AttackKind parse_kind(const std::string& k) {
  if (k == "mos") return AttackKind::kMos;
  if (k == "apgd") return AttackKind::kApgd;
  if (k == "apgd_all") return AttackKind::kApgdAll;
  if (k == "upper_bound") return AttackKind::kUpperBound;
  throw std::invalid_argument("unknown attack kind '" + k + "'");
}

std::vector<LossId> parse_losses(const json& j) {
  return to_loss_ids(j.get<std::vector<int>>());
}

// Splits CSV text into lines, remembering the byte offset of each.
struct Line {
  std::string text;
  std::size_t offset;
};
std::vector<Line> split_lines(const std::string& text) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back({std::move(line), pos});
    pos = end + 1;
  }
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t offset) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad number '" + s + "'", offset);
  }
}

void absorb(PointResult& r, const AttackOutcome& o, bool& any_success) {
  if (o.failed) {
    r.failed = true;
    if (r.failure.empty()) r.failure = o.failure;
  }
  if (o.success && !any_success) {
    any_success = true;
    r.iterations = o.success_iteration.value_or(0);
  }
}

PointResult attack_point(const ClassifierWeights& model, const LabeledPoint& p,
                         std::size_t index, const AttackSpec& spec,
                         AttackOutcome* trace_out) {
  PointResult r;
  r.clean_error = predict(model, p.x) != p.y;
  bool any_success = false;
  const AttackConfig& base = spec.cfg;
  double best_g = -std::numeric_limits<double>::infinity();

  auto seeded = [&](std::size_t restart) {
    AttackConfig c = base;
    c.seed = derive_seed(base.seed, index, restart);
    return c;
  };

  switch (spec.kind) {
    case AttackKind::kMos:
      for (std::size_t rs = 0; rs < base.restarts; ++rs) {
        const AttackOutcome o = mos_attack(model, p, seeded(rs));
        absorb(r, o, any_success);
        if (!o.failed && o.g_max > best_g) {
          best_g = o.g_max;
          r.best_losses = o.best_losses;
        }
        if (rs == 0 && trace_out != nullptr) *trace_out = o;
        if (any_success && base.early_stop) break;
      }
      break;
    case AttackKind::kApgd:
      for (std::size_t rs = 0; rs < base.restarts; ++rs) {
        const AttackOutcome o = apgd_single(model, p, base.losses.front(), seeded(rs));
        absorb(r, o, any_success);
        if (rs == 0 && trace_out != nullptr) *trace_out = o;
        if (any_success && base.early_stop) break;
      }
      break;
    case AttackKind::kApgdAll:
    case AttackKind::kUpperBound:
      for (std::size_t li = 0; li < base.losses.size(); ++li) {
        for (std::size_t rs = 0; rs < base.restarts; ++rs) {
          const AttackOutcome o = apgd_single(model, p, base.losses[li], seeded(rs));
          absorb(r, o, any_success);
          if (li == 0 && rs == 0 && trace_out != nullptr) *trace_out = o;
        }
        if (any_success && base.early_stop) break;
      }
      break;
  }
  if (r.clean_error) {
    r.iterations = 0;
  }
  r.success = r.clean_error || any_success;
  return r;
}

ResultsRow summarize(const std::string& name, std::size_t budget,
                     const std::vector<PointResult>& points, double seconds) {
  ResultsRow row{name, budget, 100.0 * attack_success_rate(points), 0.0, seconds};
  std::size_t hits = 0;
  double iters = 0.0;
  for (const PointResult& p : points) {
    if (!p.success) continue;
    ++hits;
    iters += static_cast<double>(p.iterations);
  }
  row.mean_iterations = hits > 0 ? iters / static_cast<double>(hits) : 0.0;
  return row;
}

std::string trace_to_csv(const AttackOutcome& o) {
  std::ostringstream ss;
  ss << "# mos-trace v1\niteration,g,g_max,eta,success\n";
  for (const TraceEntry& t : o.trace) {
    ss << t.iteration << ',' << fmt_double(t.g) << ',' << fmt_double(t.g_max) << ','
       << fmt_double(t.eta) << ',' << (t.success ? 1 : 0) << '\n';
  }
  return ss.str();
}

}  // namespace

std::size_t AttackSpec::budget() const {
  return kind == AttackKind::kMos ? cfg.K : cfg.restarts;
}

bool ResultsRow::same_result(const ResultsRow& o) const {
  return attack == o.attack && budget == o.budget && asr_percent == o.asr_percent &&
         mean_iterations == o.mean_iterations;
}

const ResultsRow* ResultsTable::find(const std::string& attack) const {
  for (const ResultsRow& r : rows) {
    if (r.attack == attack) return &r;
  }
  return nullptr;
}

bool ResultsTable::same_results(const ResultsTable& o) const {
  if (rows.size() != o.rows.size()) return false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].same_result(o.rows[i])) return false;
  }
  return true;
}

json attack_config_to_json(const AttackConfig& cfg) {
  std::vector<int> ids;
  for (const LossId& id : cfg.losses) ids.push_back(id.value());
  return json{{"epsilon", cfg.epsilon},
              {"eta0", cfg.initial_step()},
              {"n_iter", cfg.n_iter},
              {"alpha", cfg.alpha},
              {"rho", cfg.rho},
              {"mu", cfg.mu},
              {"losses", ids},
              {"K", cfg.K},
              {"seed", cfg.seed},
              {"restarts", cfg.restarts},
              {"early_stop", cfg.early_stop},
              {"step_rule", cfg.step_rule == StepRule::kSign ? "sign" : "raw"}};
}

AttackConfig attack_config_from_json(const json& j, const AttackConfig& defaults) {
  AttackConfig c = defaults;
  c.epsilon = j.value("epsilon", c.epsilon);
  c.eta0 = j.value("eta0", c.eta0);
  c.n_iter = j.value("n_iter", c.n_iter);
  c.alpha = j.value("alpha", c.alpha);
  c.rho = j.value("rho", c.rho);
  c.mu = j.value("mu", c.mu);
  if (j.contains("losses")) c.losses = parse_losses(j.at("losses"));
  c.K = j.value("K", c.K);
  c.seed = j.value("seed", c.seed);
  c.restarts = j.value("restarts", c.restarts);
  c.early_stop = j.value("early_stop", c.early_stop);
  if (j.contains("step_rule")) {
    const std::string rule = j.at("step_rule").get<std::string>();
    if (rule == "sign") {
      c.step_rule = StepRule::kSign;
    } else if (rule == "raw") {
      c.step_rule = StepRule::kRaw;
    } else {
      throw std::invalid_argument("step_rule must be 'sign' or 'raw'");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    DatasetSpec& s = cfg.dataset;
    s.seed = d.value("seed", s.seed);
    s.n_train = d.value("n_train", s.n_train);
    s.n_eval = d.value("n_eval", s.n_eval);
    s.d = d.value("d", s.d);
    s.num_classes = d.value("classes", s.num_classes);
    s.spread = d.value("spread", s.spread);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    ModelSpec& s = cfg.model;
    s.hidden = m.value("hidden", s.hidden);
    s.adversarial = m.value("adversarial", s.adversarial);
    s.epsilon = m.value("epsilon", s.epsilon);
    s.seed = m.value("seed", s.seed);
    s.epochs = m.value("epochs", s.epochs);
    s.step_size = m.value("step_size", s.step_size);
    s.batch_size = m.value("batch_size", s.batch_size);
    if (m.contains("weights")) s.weights = m.at("weights").get<std::string>();
  }
  AttackConfig defaults;
  if (j.contains("attack_defaults")) defaults = attack_config_from_json(j.at("attack_defaults"));
  for (const json& a : j.value("attacks", json::array())) {
    AttackSpec spec;
    spec.kind = parse_kind(a.value("kind", std::string("mos")));
    spec.cfg = attack_config_from_json(a, defaults);
    spec.name = a.value("name", std::string());
    if (spec.name.empty()) spec.name = "attack" + std::to_string(cfg.attacks.size());
    spec.include = a.value("include", std::vector<std::string>{});
    cfg.attacks.push_back(std::move(spec));
  }
  std::vector<std::string> names;
  for (const AttackSpec& s : cfg.attacks) {
    if (std::find(names.begin(), names.end(), s.name) != names.end()) {
      throw std::invalid_argument("duplicate attack name '" + s.name + "'");
    }
    for (const std::string& inc : s.include) {
      if (std::find(names.begin(), names.end(), inc) == names.end()) {
        throw std::invalid_argument("attack '" + s.name + "' includes '" + inc +
                                    "', which must be listed before it");
      }
    }
    names.push_back(s.name);
  }
  if (j.contains("miner")) {
    const json& m = j.at("miner");
    MinerConfig& c = cfg.miner;
    c.lambda = m.value("lambda", c.lambda);
    c.T = m.value("T", c.T);
    c.C = m.value("C", c.C);
    c.mu = m.value("mu", defaults.mu);
    c.steps = m.value("steps", c.steps);
    c.step_size = m.value("step_size", c.step_size);
    c.extra_starts = m.value("extra_starts", c.extra_starts);
    c.seed = m.value("seed", c.seed);
    c.validate();
  } else {
    cfg.miner.mu = defaults.mu;
  }
  cfg.trace_points = j.value("trace_points", cfg.trace_points);
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  cfg.workers = j.value("workers", cfg.workers);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  try {
    return parse_experiment_config(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), e.byte);
  }
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MOS_NUM_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

std::pair<Dataset, Dataset> make_experiment_data(const DatasetSpec& spec) {
  BlobSpec blobs{spec.n_train, spec.d, spec.num_classes, spec.spread, spec.seed};
  Dataset train = make_blobs(blobs);
  blobs.n = spec.n_eval;
  blobs.seed = derive_seed(spec.seed, 0, 1);
  return {std::move(train), make_blobs(blobs)};
}

TrainingResult build_model(const ModelSpec& spec, const Dataset& train) {
  if (spec.weights) {
    TrainingResult r{load_weights(*spec.weights), 0.0};
    r.clean_accuracy = accuracy(r.weights, train);
    return r;
  }
  TrainingConfig tc;
  tc.dims.clear();
  tc.dims.push_back(train.d);
  tc.dims.insert(tc.dims.end(), spec.hidden.begin(), spec.hidden.end());
  tc.dims.push_back(train.num_classes);
  tc.seed = spec.seed;
  tc.epochs = spec.epochs;
  tc.step_size = spec.step_size;
  tc.batch_size = spec.batch_size;
  tc.adversarial = spec.adversarial;
  tc.epsilon = spec.epsilon;
  return train_toy(tc, train);
}

std::vector<PointResult> sweep_points(const ClassifierWeights& model,
                                      const std::vector<LabeledPoint>& points,
                                      const AttackSpec& spec, ExecPolicy policy,
                                      std::vector<AttackOutcome>* traced,
                                      std::size_t trace_points) {
  spec.cfg.validate();
  const std::size_t n = points.size();
  std::vector<PointResult> results(n);
  const std::size_t n_traced = traced != nullptr ? std::min(trace_points, n) : 0;
  if (traced != nullptr) traced->assign(n_traced, AttackOutcome{});

  auto one = [&](std::size_t i) {
    AttackOutcome* slot = i < n_traced ? &(*traced)[i] : nullptr;
    try {
      results[i] = attack_point(model, points[i], i, spec, slot);
    } catch (const std::exception& e) {
      PointResult r;
      r.failed = true;
      r.failure = e.what();
      r.clean_error = false;
      results[i] = std::move(r);
    }
  };
  if (policy == ExecPolicy::kSerial) {
    for (std::size_t i = 0; i < n; ++i) one(i);
  } else {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::size_t i = 0; i < n; ++i) one(i);
  }
  return results;
}

double attack_success_rate(const std::vector<PointResult>& points) {
  if (points.empty()) return 0.0;
  const auto hits = std::count_if(points.begin(), points.end(),
                                  [](const PointResult& p) { return p.success; });
  return static_cast<double>(hits) / static_cast<double>(points.size());
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, ExecPolicy policy) {
  omp_set_num_threads(resolve_workers(cfg.workers));
  ExperimentResult res;
  auto [train, eval] = make_experiment_data(cfg.dataset);
  TrainingResult trained = build_model(cfg.model, train);
  res.model = std::move(trained.weights);
  res.eval = std::move(eval);
  res.clean_accuracy = accuracy(res.model, res.eval);
  res.table.rows.push_back(
      {"clean", 0, 100.0 * (1.0 - res.clean_accuracy), 0.0, 0.0});

  for (const AttackSpec& spec : cfg.attacks) {
    AttackRun run;
    run.spec = spec;
    const auto t0 = Clock::now();
    run.points = sweep_points(res.model, res.eval.points, spec, policy, &run.traced,
                              cfg.trace_points);
    if (spec.kind == AttackKind::kUpperBound) {
      for (const std::string& inc : spec.include) {
        const auto it = std::find_if(res.runs.begin(), res.runs.end(),
                                     [&](const AttackRun& r) { return r.spec.name == inc; });
        for (std::size_t i = 0; i < run.points.size(); ++i) {
          const PointResult& other = it->points[i];
          PointResult& mine = run.points[i];
          if (other.success && !mine.success) {
            mine.success = true;
            mine.iterations = other.iterations;
          }
        }
      }
    }
    run.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    res.table.rows.push_back(summarize(spec.name, spec.budget(), run.points, run.wall_seconds));
    res.runs.push_back(std::move(run));
  }
  return res;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_file(dir / "results.csv", results_to_csv(result.table));
  json meta = results_to_json(result.table);
  meta["clean_accuracy"] = result.clean_accuracy;
  meta["eval_points"] = result.eval.points.size();
  write_file(dir / "results.json", meta.dump(2));
  save_weights(result.model, dir / "model.weights");
  save_dataset_csv(result.eval, dir / "eval.csv");
  for (const AttackRun& run : result.runs) {
    const std::string name = slug(run.spec.name);
    if (run.spec.kind == AttackKind::kMos) {
      std::vector<LossMatrixRecord> records;
      for (std::size_t i = 0; i < run.points.size(); ++i) {
        if (!run.points[i].best_losses) continue;
        records.push_back({i, result.eval.points[i].y, *run.points[i].best_losses});
      }
      write_file(dir / ("loss_matrices_" + name + ".json"),
                 loss_matrices_to_json(run.spec.name, records).dump());
    }
    if (!run.traced.empty()) {
      const fs::path tdir = dir / "traces" / name;
      fs::create_directories(tdir);
      for (std::size_t i = 0; i < run.traced.size(); ++i) {
        write_file(tdir / ("point_" + std::to_string(i) + ".csv"), trace_to_csv(run.traced[i]));
      }
    }
  }
}

std::string results_to_csv(const ResultsTable& table) {
  std::ostringstream ss;
  ss << "# mos-results v1\nattack,budget,asr_percent,mean_iterations,wall_seconds\n";
  for (const ResultsRow& r : table.rows) {
    ss << r.attack << ',' << r.budget << ',' << fmt_double(r.asr_percent) << ','
       << fmt_double(r.mean_iterations) << ',' << fmt_double(r.wall_seconds) << '\n';
  }
  return ss.str();
}

ResultsTable results_from_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0].text != "# mos-results v1") {
    throw ParseError("missing '# mos-results v1' header", 0);
  }
  if (lines.size() < 2 ||
      lines[1].text != "attack,budget,asr_percent,mean_iterations,wall_seconds") {
    throw ParseError("unexpected column header", lines.size() > 1 ? lines[1].offset : 0);
  }
  ResultsTable t;
  for (std::size_t l = 2; l < lines.size(); ++l) {
    if (lines[l].text.empty()) continue;
    const auto f = split_fields(lines[l].text);
    if (f.size() != 5) throw ParseError("expected 5 columns", lines[l].offset);
    ResultsRow r;
    r.attack = f[0];
    r.budget = static_cast<std::size_t>(parse_number(f[1], lines[l].offset));
    r.asr_percent = parse_number(f[2], lines[l].offset);
    r.mean_iterations = parse_number(f[3], lines[l].offset);
    r.wall_seconds = parse_number(f[4], lines[l].offset);
    t.rows.push_back(std::move(r));
  }
  return t;
}

json results_to_json(const ResultsTable& table) {
  json rows = json::array();
  for (const ResultsRow& r : table.rows) {
    rows.push_back({{"attack", r.attack},
                    {"budget", r.budget},
                    {"asr_percent", r.asr_percent},
                    {"mean_iterations", r.mean_iterations},
                    {"wall_seconds", r.wall_seconds}});
  }
  return json{{"format", "mos-results"}, {"version", 1}, {"rows", rows}};
}

json loss_matrices_to_json(const std::string& attack,
                           const std::vector<LossMatrixRecord>& records) {
  json points = json::array();
  std::vector<int> ids;
  if (!records.empty()) {
    for (const LossId& id : records.front().F.losses) ids.push_back(id.value());
  }
  for (const LossMatrixRecord& r : records) {
    json rows = json::array();
    for (std::size_t i = 0; i < r.F.m(); ++i) {
      const auto row = r.F.values.row(i);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    points.push_back({{"index", r.index}, {"label", r.label}, {"values", rows}});
  }
  return json{{"format", "mos-loss-matrices"},
              {"version", 1},
              {"attack", attack},
              {"loss_ids", ids},
              {"points", points}};
}

std::vector<LossMatrixRecord> loss_matrices_from_json(const json& j) {
  if (j.value("format", std::string()) != "mos-loss-matrices" || j.value("version", 0) != 1) {
    throw std::invalid_argument("not a mos-loss-matrices v1 document");
  }
  const std::vector<LossId> ids = parse_losses(j.at("loss_ids"));
  std::vector<LossMatrixRecord> out;
  for (const json& p : j.at("points")) {
    LossMatrixRecord r;
    r.index = p.at("index").get<std::size_t>();
    r.label = p.at("label").get<std::size_t>();
    const auto rows = p.at("values").get<std::vector<std::vector<double>>>();
    if (rows.size() != ids.size() || rows.empty()) {
      throw std::invalid_argument("loss matrix row count does not match loss_ids");
    }
    const std::size_t K = rows.front().size();
    r.F = LossMatrix{ids, Mat(ids.size(), K)};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != K) throw std::invalid_argument("ragged loss matrix");
      std::copy(rows[i].begin(), rows[i].end(), r.F.values.row(i).begin());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string loss_matrices_to_csv(const std::vector<LossMatrixRecord>& records) {
  std::ostringstream ss;
  ss << "# mos-loss-matrices v1\npoint,label,loss_id,k,value\n";
  for (const LossMatrixRecord& r : records) {
    for (std::size_t i = 0; i < r.F.m(); ++i) {
      for (std::size_t k = 0; k < r.F.K(); ++k) {
        ss << r.index << ',' << r.label << ',' << r.F.losses[i].value() << ',' << k << ','
           << fmt_double(r.F.values(i, k)) << '\n';
      }
    }
  }
  return ss.str();
}

std::vector<LossMatrixRecord> loss_matrices_from_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0].text != "# mos-loss-matrices v1") {
    throw ParseError("missing '# mos-loss-matrices v1' header", 0);
  }
  if (lines.size() < 2 || lines[1].text != "point,label,loss_id,k,value") {
    throw ParseError("unexpected column header", lines.size() > 1 ? lines[1].offset : 0);
  }
  struct Cell {
    std::size_t label;
    int loss;
    std::size_t k;
    double v;
  };
  std::map<std::size_t, std::vector<Cell>> by_point;
  for (std::size_t l = 2; l < lines.size(); ++l) {
    if (lines[l].text.empty()) continue;
    const auto f = split_fields(lines[l].text);
    if (f.size() != 5) throw ParseError("expected 5 columns", lines[l].offset);
    const std::size_t off = lines[l].offset;
    by_point[static_cast<std::size_t>(parse_number(f[0], off))].push_back(
        {static_cast<std::size_t>(parse_number(f[1], off)),
         static_cast<int>(parse_number(f[2], off)),
         static_cast<std::size_t>(parse_number(f[3], off)), parse_number(f[4], off)});
  }
  std::vector<LossMatrixRecord> out;
  for (const auto& [index, cells] : by_point) {
    std::vector<LossId> ids;
    std::size_t K = 0;
    for (const Cell& c : cells) {
      const LossId id(c.loss);
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
      K = std::max(K, c.k + 1);
    }
    LossMatrixRecord r{index, cells.front().label, LossMatrix{ids, Mat(ids.size(), K)}};
    if (cells.size() != ids.size() * K) {
      throw std::invalid_argument("point " + std::to_string(index) + " has missing cells");
    }
    for (const Cell& c : cells) {
      const auto row = static_cast<std::size_t>(
          std::find(ids.begin(), ids.end(), LossId(c.loss)) - ids.begin());
      r.F.values(row, c.k) = c.v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LossMatrixRecord> load_loss_matrices(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (path.extension() == ".csv") return loss_matrices_from_csv(text);
  try {
    return loss_matrices_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), e.byte);
  }
}

PatternHistogram run_miner(const std::vector<LossMatrixRecord>& records, const MinerConfig& cfg,
                           ExecPolicy policy) {
  cfg.validate();
  std::vector<PatternRecord> mined(records.size());
  std::exception_ptr failure;
  auto one = [&](std::size_t i) {
    MinerConfig c = cfg;
    c.seed = derive_seed(cfg.seed, records[i].index, 0);
    mined[i] = mine_point(records[i].F, c);
  };
  if (policy == ExecPolicy::kSerial) {
    for (std::size_t i = 0; i < records.size(); ++i) one(i);
  } else {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::size_t i = 0; i < records.size(); ++i) {
      try {
        one(i);
      } catch (...) {
#pragma omp critical(mos_run_miner)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  const std::vector<LossId> losses =
      records.empty() ? std::vector<LossId>{} : records.front().F.losses;
  return aggregate_patterns(mined, losses);
}

json patterns_to_json(const PatternHistogram& hist) {
  auto to_array = [](const std::vector<PatternCount>& v) {
    json a = json::array();
    for (const PatternCount& p : v) {
      a.push_back({{"pattern", p.pattern}, {"count", p.count}, {"percent", p.percent}});
    }
    return a;
  };
  return json{{"format", "mos-patterns"},
              {"version", 1},
              {"total", hist.total},
              {"all_losses_percent", hist.all_losses_percent},
              {"patterns", to_array(hist.patterns)},
              {"filtered", to_array(hist.filtered)}};
}

std::vector<ProbeRow> gradient_cost_probe(const ClassifierWeights& model,
                                          const std::vector<std::size_t>& Ks,
                                          const std::vector<LossId>& losses,
                                          std::size_t repeats, std::uint64_t seed) {
  if (losses.empty()) throw std::invalid_argument("probe needs at least one loss");
  const std::size_t d = model.input_dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  LabeledPoint point{Vec(d), 0};
  for (double& v : point.x) v = unif(rng);

  // Calls of fn needed for one sample to last at least 20 ms.
  auto calibrate = [](const auto& fn) {
    std::size_t calls = 1;
    while (true) {
      const auto t0 = Clock::now();
      for (std::size_t c = 0; c < calls; ++c) fn();
      if (std::chrono::duration<double>(Clock::now() - t0).count() > 2e-2) return calls;
      calls *= 2;
    }
  };
  auto per_call = [](const auto& fn, std::size_t calls) {
    const auto t0 = Clock::now();
    for (std::size_t c = 0; c < calls; ++c) fn();
    return std::chrono::duration<double>(Clock::now() - t0).count() / static_cast<double>(calls);
  };
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };

  std::vector<ProbeRow> rows;
  for (std::size_t K : Ks) {
    PerturbationSet deltas(K, d);
    for (double& v : deltas.deltas.values()) v = 0.05 * (2.0 * unif(rng) - 1.0);
    std::vector<Vec> inputs(K, point.x);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < d; ++j) inputs[k][j] += deltas.deltas(k, j);
    }
    double sink = 0.0;
    auto set_call = [&] {
      sink += grad_set_objective(model, point, deltas, losses, 1.0, ExecPolicy::kSerial).value;
    };
    auto single_call = [&] {
      for (std::size_t k = 0; k < K; ++k) {
        sink += grad_single_loss(model, inputs[k], point.y, losses.front()).value;
      }
    };
    const std::size_t set_n = calibrate(set_call);
    const std::size_t single_n = calibrate(single_call);
    // Paired samples, so drifting clock speed affects both sides alike.
    std::vector<double> set_s, single_s, ratio;
    for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
      set_s.push_back(per_call(set_call, set_n));
      single_s.push_back(per_call(single_call, single_n));
      ratio.push_back(set_s.back() / single_s.back());
    }
    if (!std::isfinite(sink)) throw NumericError("probe: non-finite objective");
    rows.push_back({K, losses.size(), median(set_s), median(single_s), median(ratio)});
  }
  return rows;
}

std::string probe_to_csv(const std::vector<ProbeRow>& rows) {
  std::ostringstream ss;
  ss << "# mos-probe v1\nK,m,set_seconds,single_seconds,ratio\n";
  for (const ProbeRow& r : rows) {
    ss << r.K << ',' << r.m << ',' << fmt_double(r.set_seconds) << ','
       << fmt_double(r.single_seconds) << ',' << fmt_double(r.ratio) << '\n';
  }
  return ss.str();
}

MergedReport merge_reports(const std::vector<std::filesystem::path>& run_dirs) {
  std::vector<std::string> attacks;
  std::vector<std::pair<std::string, ResultsTable>> tables;
  for (const auto& dir : run_dirs) {
    ResultsTable t = results_from_csv(read_file(dir / "results.csv"));
    for (const ResultsRow& r : t.rows) {
      if (std::find(attacks.begin(), attacks.end(), r.attack) == attacks.end()) {
        attacks.push_back(r.attack);
      }
    }
    std::string name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    tables.emplace_back(std::move(name), std::move(t));
  }
  MergedReport rep;
  std::ostringstream wide;
  std::ostringstream lng;
  wide << "# mos-report v1\nrun";
  for (const std::string& a : attacks) wide << ',' << a;
  wide << '\n';
  lng << "# mos-report-long v1\nrun,attack,budget,asr_percent,mean_iterations,wall_seconds\n";
  for (const auto& [run, t] : tables) {
    wide << run;
    for (const std::string& a : attacks) {
      wide << ',';
      if (const ResultsRow* r = t.find(a)) wide << fmt_double(r->asr_percent);
    }
    wide << '\n';
    for (const ResultsRow& r : t.rows) {
      lng << run << ',' << r.attack << ',' << r.budget << ',' << fmt_double(r.asr_percent) << ','
          << fmt_double(r.mean_iterations) << ',' << fmt_double(r.wall_seconds) << '\n';
    }
  }
  rep.wide_csv = wide.str();
  rep.long_csv = lng.str();
  return rep;
}

}  // namespace mos
