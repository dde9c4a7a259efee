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
#include <optional>
#include <span>
#include <string>

#include "edpo/policy/policy.hpp"
#include "json.hpp"

namespace edpo::baselines {

using policy::Policy;

enum class TrDpoMode { kHard, kSoft };

struct TrDpoConfig {
  TrDpoMode mode = TrDpoMode::kHard;
  std::uint64_t tau = 128;  // steps between hard updates
  double alpha = 0.6;       // soft merge weight on the policy

  // Throws ConfigError for tau == 0 or alpha outside [0, 1].
  void validate() const;
};

TrDpoMode trdpo_mode_from_string(const std::string& name);
std::string to_string(TrDpoMode mode);

// Applies the reference update due at `step` (1-based). Returns true when
// the reference changed; cached reference quantities must then be dropped.
bool trdpo_maybe_update(Policy& reference, const Policy& policy,
                        std::uint64_t step, const TrDpoConfig& config);

// Simplified batch-level comparator in the spirit of margin-driven beta
// control. Not the rule of any published method.
struct BetaDpoConfig {
  double beta0 = 0.1;
  double momentum = 0.9;
  double sensitivity = 0.5;

  void validate() const;
};

class BetaDpoController {
 public:
  explicit BetaDpoController(BetaDpoConfig config,
                             std::optional<double> running_mean = std::nullopt);

  // M <- m * M + (1 - m) * mean; beta = beta0 * (1 + s * (mean - M)),
  // clamped to [beta0 / 10, beta0 * 10]. An unset M starts at the first
  // batch mean. Throws ArgumentError on an empty batch.
  double batch_beta(std::span<const double> margins);

  const BetaDpoConfig& config() const { return config_; }
  std::optional<double> running_mean() const { return running_mean_; }
  std::uint64_t clamp_events() const { return clamp_events_; }

 private:
  BetaDpoConfig config_;
  std::optional<double> running_mean_;
  std::uint64_t clamp_events_ = 0;
};

double betadpo_batch_beta(BetaDpoController& controller,
                          std::span<const double> margins);

}  // namespace edpo::baselines
