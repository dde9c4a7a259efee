// Copyright 2026 The edpo-lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "edpo/eval/eval.hpp"
#include "edpo/oracle/oracle.hpp"
#include "edpo/policy/neural.hpp"
#include "edpo/trainer/trainer.hpp"
#include "json.hpp"

namespace edpo::eval {

inline constexpr int kSchemaVersion = 1;

enum class PolicyKind { kTabular, kNeural };

struct TaskConfig {
  std::size_t vocab_size = 4;
  std::size_t max_len = 2;
  bool eos = false;  // when set, the last vocabulary entry ends a response
  std::size_t num_prompts = 8;
  PolicyKind policy = PolicyKind::kTabular;
  policy::NeuralConfig neural;
  double reference_scale = 1.0;
  std::uint64_t reference_seed = 1;
  double reward_scale = 1.0;
  std::uint64_t reward_seed = 2;
  std::size_t n_train = 512;
  std::size_t n_test = 256;
  oracle::LabelMode label_mode = oracle::LabelMode::kHard;
  bool sample_from_reference = true;  // otherwise uniform over responses
  std::uint64_t data_seed = 3;

  policy::SequenceSpace space() const;
};

struct EvalConfig {
  KlMode kl_mode = KlMode::kExact;
  std::size_t kl_samples = 2000;
  bool exact_win_rate = true;
  std::size_t win_samples = 2000;
  std::uint64_t seed = 0;
  double eps_lo = 0.005;
  double eps_hi = 0.02;
  std::size_t eps_points = 100;
};

struct SweepConfig {
  std::vector<std::string> methods = {"dpo", "edpo"};
  std::vector<double> betas = {0.01, 0.05, 0.1, 0.5};
  std::vector<double> eps = {0.01};
  std::vector<std::uint64_t> seeds = {0};
};

struct ExperimentConfig {
  std::string name = "experiment";
  TaskConfig task;
  trainer::TrainConfig train;
  EvalConfig eval;
  SweepConfig sweep;
};

// Throws ConfigError on unknown keys, a schema_version mismatch or invalid
// values.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct Task {
  policy::SequenceSpace space;
  std::unique_ptr<policy::Policy> reference;
  oracle::RewardSpec reward;
};

Task build_task(const TaskConfig& config);

struct DataSplits {
  oracle::Dataset train;
  oracle::Dataset test;
};

DataSplits generate_data(const TaskConfig& config, const Task& task);

std::vector<std::size_t> all_prompts(const policy::SequenceSpace& space);

EvalReport evaluate(const ExperimentConfig& config, const Task& task,
                    const policy::Policy& policy,
                    const trainer::TrainResult& train,
                    const oracle::Dataset& test);

struct RunSummary {
  std::filesystem::path dir;
  EvalReport report;
  trainer::TrainResult train;
};

// Trains one run and writes config.json, metrics.csv, timing.csv,
// reference.ckpt, final.ckpt, optional checkpoints/, eval.csv and
// summary.json into `dir`.
RunSummary run_experiment(const ExperimentConfig& config,
                          const oracle::Dataset& train,
                          const oracle::Dataset& test,
                          const std::filesystem::path& dir,
                          const std::filesystem::path& train_path = {},
                          const std::filesystem::path& test_path = {});

struct SweepEntry {
  std::string run;
  std::string method;
  double beta0 = 0.0;
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::string status;  // "ok" or "failed: <message>"
  std::string config_hash;
};

// Generates data once under out/data, then trains method x beta0 x eps x
// seed (eps varies only for edpo) with up to `jobs` runs in parallel. Each
// run's failure is recorded in manifest.csv without stopping the others.
std::vector<SweepEntry> run_sweep(const ExperimentConfig& config,
                                  const std::filesystem::path& out,
                                  std::size_t jobs = 1);

std::string run_name(const std::string& method, double beta0, double eps,
                     std::uint64_t seed);

class NoRunsFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AnalysisOutputs {
  std::size_t runs = 0;
  std::vector<ParetoPoint> points;
};

// Reads every run directory (holding summary.json) below `runs_dir` and
// writes pareto.csv, pareto.svg, occurrence.csv, eps_bounds.csv and
// monotonicity.csv into `out`. Throws NoRunsFound when none exist.
AnalysisOutputs analyze_runs(const std::filesystem::path& runs_dir,
                             const std::filesystem::path& out);

}  // namespace edpo::eval
