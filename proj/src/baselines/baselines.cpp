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

#include "edpo/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "edpo/errors.hpp"

namespace edpo::baselines {

void TrDpoConfig::validate() const {
  if (mode == TrDpoMode::kHard && tau == 0) {
    throw ConfigError("trdpo.tau must be a positive integer");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("trdpo.alpha must lie in [0, 1]");
  }
}

TrDpoMode trdpo_mode_from_string(const std::string& name) {
  if (name == "hard") return TrDpoMode::kHard;
  if (name == "soft") return TrDpoMode::kSoft;
  throw ConfigError("unknown trdpo mode '" + name + "'");
}

std::string to_string(TrDpoMode mode) {
  return mode == TrDpoMode::kHard ? "hard" : "soft";
}

bool trdpo_maybe_update(Policy& reference, const Policy& policy,
                        std::uint64_t step, const TrDpoConfig& config) {
  if (step == 0) throw ArgumentError("trdpo step counter starts at 1");
  if (config.mode == TrDpoMode::kHard) {
    if (step % config.tau != 0) return false;
    policy::copy_parameters(reference, policy);
    return true;
  }
  if (config.alpha == 0.0) return false;
  policy::merge_into(reference, policy, config.alpha);
  return true;
}

void BetaDpoConfig::validate() const {
  if (!(beta0 > 0.0) || !std::isfinite(beta0)) {
    throw ConfigError("betadpo.beta0 must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("betadpo.momentum must lie in [0, 1)");
  }
  if (!(sensitivity >= 0.0) || !std::isfinite(sensitivity)) {
    throw ConfigError("betadpo.sensitivity must be non-negative");
  }
}

BetaDpoController::BetaDpoController(BetaDpoConfig config,
                                     std::optional<double> running_mean)
    : config_(config), running_mean_(running_mean) {
  config_.validate();
}

double BetaDpoController::batch_beta(std::span<const double> margins) {
  if (margins.empty()) throw ArgumentError("cannot compute beta from an empty batch");
  double sum = 0.0;
  for (double m : margins) sum += m;
  const double mean = sum / static_cast<double>(margins.size());
  const double m = config_.momentum;
  const double prev = running_mean_.value_or(mean);
  running_mean_ = m * prev + (1.0 - m) * mean;
  const double b0 = config_.beta0;
  double beta = b0 * (1.0 + config_.sensitivity * (mean - *running_mean_));
  const double lo = b0 / 10.0;
  const double hi = b0 * 10.0;
  if (!(beta >= lo && beta <= hi)) {
    beta = std::isnan(beta) ? b0 : std::clamp(beta, lo, hi);
    ++clamp_events_;
  }
  return beta;
}

double betadpo_batch_beta(BetaDpoController& controller,
                          std::span<const double> margins) {
  return controller.batch_beta(margins);
}

}  // namespace edpo::baselines
