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
#include <optional>
#include <span>
#include <vector>

#include "edpo/dpo/dpo.hpp"

namespace edpo::epsilon {

using dpo::ResponseLogits;
using dpo::TripletLogits;

struct PerturbedBetas {
  double minus = 0.0;  // beta / (1 + eps)
  double plus = 0.0;   // beta / (1 - eps)
};

// Throws ArgumentError unless beta > 0 and 0 < eps < 1.
PerturbedBetas perturbed_betas(double beta, double eps);

// lambda * f_theta + (1 - lambda) * f_ref, evaluated as
// f_theta + (lambda - 1) * (f_theta - f_ref) so that equal inputs are
// reproduced exactly for every lambda.
std::vector<double> interpolate_logits(std::span<const double> f_theta,
                                       std::span<const double> f_ref,
                                       double lambda);

// Which perturbed coefficient a log-likelihood estimate targets.
enum class Perturbation {
  kMinus,  // beta / (1 + eps): logits (1 + eps) f_theta - eps f_ref
  kPlus,   // beta / (1 - eps): logits (1 - eps) f_theta + eps f_ref
};

// Sequence log-likelihood under per-position interpolated logits, using only
// cached logits. Throws InternalError when the cache is incomplete and
// ArgumentError unless 0 <= eps < 1 (eps = 0 returns the policy's own
// log-likelihood).
double estimated_perturbed_logprob(const ResponseLogits& logits, double eps,
                                   Perturbation which);

struct PerturbedEstimate {
  double z_minus = 0.0;
  double z_zero = 0.0;
  double z_plus = 0.0;
};

PerturbedEstimate perturbed_z(const TripletLogits& logits, double eps);
// Same, with the unperturbed margin supplied by the caller.
PerturbedEstimate perturbed_z(const TripletLogits& logits, double eps,
                              double z_zero);

enum class Direction : int { kMinus = -1, kZero = 0, kPlus = 1 };

struct BetaDecision {
  double beta_tilde = 0.0;
  Direction direction = Direction::kZero;
};

// Strictly decreasing (z_minus > z_zero > z_plus) selects beta / (1 + eps);
// strictly increasing selects beta / (1 - eps); anything else, ties
// included, keeps beta.
BetaDecision select_beta(const PerturbedEstimate& estimate, double beta,
                         double eps);

// Running KL coefficient with per-instance decisions and occurrence counts.
class BetaController {
 public:
  // Clamp bounds default to [beta0 / 10, beta0 * 10].
  BetaController(double beta0, double eps_criterion, double eps_step,
                 std::optional<double> beta_min = std::nullopt,
                 std::optional<double> beta_max = std::nullopt);

  double beta() const { return beta_; }
  double eps_criterion() const { return eps_c_; }
  double eps_step() const { return eps_s_; }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }

  BetaDecision decide(const TripletLogits& logits) const;
  BetaDecision decide(const TripletLogits& logits, double z_zero) const;

  // beta <- mean(beta_tilde) over the whole optimizer batch, clamped.
  // Throws ArgumentError on an empty batch.
  double update(std::span<const BetaDecision> decisions);

  // Cumulative counts indexed by direction + 1.
  const std::array<std::uint64_t, 3>& occurrences() const { return counts_; }
  std::uint64_t clamp_events() const { return clamp_events_; }

 private:
  double beta_;
  double eps_c_;
  double eps_s_;
  double beta_min_;
  double beta_max_;
  std::array<std::uint64_t, 3> counts_{};
  std::uint64_t clamp_events_ = 0;
};

double update_beta(BetaController& controller,
                   std::span<const BetaDecision> decisions);

// Mean of beta_tilde computed as beta + mean(beta_tilde - beta), so an
// all-zero-direction batch returns beta bit-for-bit.
double mean_beta(double beta, std::span<const BetaDecision> decisions);

struct EpsilonBound {
  Direction direction = Direction::kZero;  // decision at the smallest eps
  std::optional<double> bound;             // absent when direction is zero
};

std::vector<double> epsilon_grid(double lo, double hi, std::size_t n_points);

// Largest grid eps such that the decision at every grid eps' <= eps equals
// the decision at the smallest grid eps.
EpsilonBound epsilon_upper_bound(const TripletLogits& logits,
                                 double lo = 0.005, double hi = 0.02,
                                 std::size_t n_points = 100);

}  // namespace edpo::epsilon
