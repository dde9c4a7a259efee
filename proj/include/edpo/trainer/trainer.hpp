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

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edpo/baselines/baselines.hpp"
#include "edpo/dpo/dpo.hpp"
#include "edpo/epsilon/epsilon_control.hpp"
#include "edpo/numerics/adam.hpp"
#include "edpo/policy/policy.hpp"
#include "json.hpp"

namespace edpo::trainer {

using dpo::PreferenceTriplet;
using policy::Policy;

enum class Method { kDpo, kEpsilonDpo, kTrDpo, kBetaDpo };

Method method_from_string(const std::string& name);
std::string to_string(Method method);

enum class Scheduler { kCosine, kConstant };

struct TrainConfig {
  Method method = Method::kEpsilonDpo;
  std::uint64_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  Scheduler scheduler = Scheduler::kCosine;
  double warmup_ratio = 0.1;
  std::uint64_t seed = 0;
  double beta = 0.1;
  double eps = 0.01;
  std::optional<double> eps_criterion;
  std::optional<double> eps_step;
  std::optional<double> beta_min;
  std::optional<double> beta_max;
  baselines::TrDpoConfig trdpo;
  baselines::BetaDpoConfig betadpo;
  numerics::AdamConfig adam;
  // Checkpoint interval in epochs (e.g. 0.2); 0 disables intermediate
  // checkpoints. A final checkpoint is always written when saving.
  double checkpoint_every = 0.0;
  // Write measured step times into the metrics table instead of 0.
  bool record_wall_time = false;

  double eps_c() const { return eps_criterion.value_or(eps); }
  double eps_s() const { return eps_step.value_or(eps); }

  // Throws ConfigError on any invalid field.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
// Rejects unknown keys.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct StepMetrics {
  std::uint64_t step = 0;  // 1-based
  double loss = 0.0;
  double beta_before = 0.0;
  double beta_after = 0.0;
  double margin_mean = 0.0;
  double frac_minus = 0.0;
  double frac_zero = 1.0;
  double frac_plus = 0.0;
  std::uint64_t fwd_passes_policy = 0;
  std::uint64_t fwd_passes_ref = 0;
  double learning_rate = 0.0;
  double wall_ms = 0.0;
  double estimate_ms = 0.0;  // time spent in the perturbation criterion
};

// Learning rate at 0-based step s of total_steps: linear warm-up over
// ceil(warmup_ratio * total) steps, then cosine decay (never reaching 0).
double scheduled_lr(const TrainConfig& config, std::uint64_t step,
                    std::uint64_t total_steps);

// Holds the policy, a working reference, the optimizer state and the method
// controller for one run.
class Trainer {
 public:
  Trainer(TrainConfig config, const Policy& initial_reference,
          std::size_t dataset_size);

  // One optimizer step on `batch`; keys index the reference cache.
  StepMetrics train_step(std::span<const PreferenceTriplet> batch,
                         std::span<const std::size_t> keys, double lr);

  const TrainConfig& config() const { return config_; }
  Policy& policy() { return *policy_; }
  const Policy& policy() const { return *policy_; }
  const Policy& reference() const { return *reference_; }
  double beta() const { return beta_; }
  std::uint64_t steps() const { return step_; }
  const epsilon::BetaController* beta_controller() const {
    return controller_ ? &*controller_ : nullptr;
  }
  std::uint64_t clamp_events() const;
  // Cumulative -1 / 0 / +1 decision counts (all zero-direction for methods
  // without per-instance decisions).
  const std::array<std::uint64_t, 3>& occurrences() const { return counts_; }

 private:
  TrainConfig config_;
  std::unique_ptr<Policy> reference_;
  std::unique_ptr<Policy> policy_;
  dpo::ReferenceCache cache_;
  numerics::AdamState adam_;
  std::optional<epsilon::BetaController> controller_;
  std::optional<baselines::BetaDpoController> betadpo_;
  double beta_;
  std::uint64_t step_ = 0;
  std::array<std::uint64_t, 3> counts_{};
};

struct CheckpointRecord {
  std::uint64_t step = 0;
  double epoch = 0.0;
  std::filesystem::path path;
};

struct TrainResult {
  std::vector<StepMetrics> metrics;
  std::unique_ptr<Policy> policy;
  std::vector<CheckpointRecord> checkpoints;
  std::array<std::uint64_t, 3> occurrences{};
  std::uint64_t clamp_events = 0;
  double final_beta = 0.0;
};

struct RunOptions {
  // Checkpoint directory; empty disables checkpoint files.
  std::filesystem::path checkpoint_dir;
};

// Epoch loop with a seeded shuffle, ceil(N / batch_size) steps per epoch and
// the configured schedule. The policy starts as a copy of the reference.
// Deterministic in (config, dataset, reference).
TrainResult run_training(const TrainConfig& config,
                         std::span<const PreferenceTriplet> dataset,
                         const Policy& reference, const RunOptions& options = {});

// In-place Fisher-Yates shuffle driven by a 64-bit Mersenne Twister.
void shuffle_indices(std::vector<std::size_t>& indices, policy::Rng& rng);

struct MetricsProvenance {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Columns: step, loss, beta, margin_mean, frac_minus, frac_zero, frac_plus,
// fwd_passes_policy, fwd_passes_ref, wall_ms, method, seed, config_hash.
// beta is the coefficient after the step's update. wall_ms is written as 0
// unless record_wall_time is set.
void write_metrics_csv(std::ostream& out, std::span<const StepMetrics> metrics,
                       const MetricsProvenance& provenance,
                       bool record_wall_time);
void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const StepMetrics> metrics,
                       const MetricsProvenance& provenance,
                       bool record_wall_time);

// Columns: step, wall_ms, estimate_ms.
void write_timing_csv(const std::filesystem::path& path,
                      std::span<const StepMetrics> metrics);

// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace edpo::trainer
