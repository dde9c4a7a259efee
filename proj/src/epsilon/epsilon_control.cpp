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

#include "edpo/epsilon/epsilon_control.hpp"

#include <algorithm>
#include <cmath>

#include "edpo/errors.hpp"
#include "edpo/numerics/math.hpp"

namespace edpo::epsilon {
namespace {

void check_open_eps(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) {
    throw ArgumentError("eps must lie in (0, 1)");
  }
}

void require_complete(const ResponseLogits& logits) {
  if (!logits.complete()) {
    throw InternalError(
        "perturbation estimate requested without cached policy and "
        "reference logits");
  }
}

// log-likelihood of `tokens` under f_theta + offset * (f_theta - f_ref).
double offset_logprob(const ResponseLogits& logits, double offset) {
  require_complete(logits);
  const std::size_t v = logits.policy.cols();
  std::vector<double> row(v);
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.tokens.size(); ++i) {
    auto f = logits.policy.row(i);
    auto g = logits.reference.row(i);
    for (std::size_t k = 0; k < v; ++k) row[k] = f[k] + offset * (f[k] - g[k]);
    acc += numerics::log_softmax_at(row, logits.tokens[i]);
  }
  return acc;
}

struct Likelihoods {
  double minus = 0.0;
  double zero = 0.0;
  double plus = 0.0;
};

// Both perturbed log-likelihoods, and optionally the unperturbed one, in one
// pass over the rows.
Likelihoods response_likelihoods(const ResponseLogits& logits, double eps,
                                 bool with_zero) {
  require_complete(logits);
  const std::size_t v = logits.policy.cols();
  thread_local std::vector<double> minus, plus;
  minus.resize(v);
  plus.resize(v);
  Likelihoods out;
  for (std::size_t i = 0; i < logits.tokens.size(); ++i) {
    auto f = logits.policy.row(i);
    auto g = logits.reference.row(i);
    for (std::size_t k = 0; k < v; ++k) {
      const double d = f[k] - g[k];
      minus[k] = f[k] + eps * d;
      plus[k] = f[k] - eps * d;
    }
    const std::size_t y = logits.tokens[i];
    out.minus += numerics::log_softmax_at(minus, y);
    if (with_zero) out.zero += numerics::log_softmax_at(f, y);
    out.plus += numerics::log_softmax_at(plus, y);
  }
  return out;
}

void check_estimate_eps(double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) {
    throw ArgumentError("eps must lie in [0, 1)");
  }
}

}  // namespace

PerturbedBetas perturbed_betas(double beta, double eps) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ArgumentError("beta must be positive");
  }
  check_open_eps(eps);
  return {beta / (1.0 + eps), beta / (1.0 - eps)};
}

std::vector<double> interpolate_logits(std::span<const double> f_theta,
                                       std::span<const double> f_ref,
                                       double lambda) {
  if (f_theta.size() != f_ref.size()) {
    throw ArgumentError("interpolate_logits: length mismatch");
  }
  const double offset = lambda - 1.0;
  std::vector<double> out(f_theta.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = f_theta[k] + offset * (f_theta[k] - f_ref[k]);
  }
  return out;
}

double estimated_perturbed_logprob(const ResponseLogits& logits, double eps,
                                   Perturbation which) {
  check_estimate_eps(eps);
  return offset_logprob(logits, which == Perturbation::kMinus ? eps : -eps);
}

PerturbedEstimate perturbed_z(const TripletLogits& logits, double eps) {
  check_estimate_eps(eps);
  const Likelihoods w = response_likelihoods(logits.chosen, eps, true);
  const Likelihoods l = response_likelihoods(logits.rejected, eps, true);
  return {w.minus - l.minus, w.zero - l.zero, w.plus - l.plus};
}

PerturbedEstimate perturbed_z(const TripletLogits& logits, double eps,
                              double z_zero) {
  check_estimate_eps(eps);
  const Likelihoods w = response_likelihoods(logits.chosen, eps, false);
  const Likelihoods l = response_likelihoods(logits.rejected, eps, false);
  return {w.minus - l.minus, z_zero, w.plus - l.plus};
}

BetaDecision select_beta(const PerturbedEstimate& e, double beta, double eps) {
  const PerturbedBetas betas = perturbed_betas(beta, eps);
  if (e.z_minus > e.z_zero && e.z_zero > e.z_plus) {
    return {betas.minus, Direction::kMinus};
  }
  if (e.z_minus < e.z_zero && e.z_zero < e.z_plus) {
    return {betas.plus, Direction::kPlus};
  }
  return {beta, Direction::kZero};
}

BetaController::BetaController(double beta0, double eps_criterion,
                               double eps_step, std::optional<double> beta_min,
                               std::optional<double> beta_max)
    : beta_(beta0),
      eps_c_(eps_criterion),
      eps_s_(eps_step),
      beta_min_(beta_min.value_or(beta0 / 10.0)),
      beta_max_(beta_max.value_or(beta0 * 10.0)) {
  if (!(beta0 > 0.0) || !std::isfinite(beta0)) {
    throw ArgumentError("beta0 must be positive");
  }
  check_open_eps(eps_c_);
  check_open_eps(eps_s_);
  if (!(beta_min_ > 0.0 && beta_min_ <= beta_ && beta_ <= beta_max_)) {
    throw ArgumentError("beta clamp bounds must satisfy 0 < min <= beta0 <= max");
  }
}

BetaDecision BetaController::decide(const TripletLogits& logits) const {
  return select_beta(perturbed_z(logits, eps_c_), beta_, eps_s_);
}

BetaDecision BetaController::decide(const TripletLogits& logits,
                                    double z_zero) const {
  return select_beta(perturbed_z(logits, eps_c_, z_zero), beta_, eps_s_);
}

double mean_beta(double beta, std::span<const BetaDecision> decisions) {
  if (decisions.empty()) throw ArgumentError("cannot update beta from an empty batch");
  double deviation = 0.0;
  for (const BetaDecision& d : decisions) deviation += d.beta_tilde - beta;
  return beta + deviation / static_cast<double>(decisions.size());
}

double BetaController::update(std::span<const BetaDecision> decisions) {
  double next = mean_beta(beta_, decisions);
  for (const BetaDecision& d : decisions) {
    counts_[static_cast<int>(d.direction) + 1] += 1;
  }
  if (next < beta_min_ || next > beta_max_) {
    next = std::clamp(next, beta_min_, beta_max_);
    ++clamp_events_;
  }
  beta_ = next;
  return beta_;
}

double update_beta(BetaController& controller,
                   std::span<const BetaDecision> decisions) {
  return controller.update(decisions);
}

std::vector<double> epsilon_grid(double lo, double hi, std::size_t n_points) {
  if (n_points < 2) throw ArgumentError("epsilon grid needs at least 2 points");
  if (!(lo > 0.0 && lo < hi && hi < 1.0)) {
    throw ArgumentError("epsilon range must satisfy 0 < lo < hi < 1");
  }
  std::vector<double> grid(n_points);
  const double step = (hi - lo) / static_cast<double>(n_points - 1);
  for (std::size_t k = 0; k < n_points; ++k) {
    grid[k] = lo + step * static_cast<double>(k);
  }
  grid.back() = hi;
  return grid;
}

EpsilonBound epsilon_upper_bound(const TripletLogits& logits, double lo,
                                 double hi, std::size_t n_points) {
  const std::vector<double> grid = epsilon_grid(lo, hi, n_points);
  // The direction does not depend on beta; any positive value works.
  auto direction_at = [&](double eps) {
    return select_beta(perturbed_z(logits, eps), 1.0, eps).direction;
  };
  EpsilonBound result;
  result.direction = direction_at(grid[0]);
  if (result.direction == Direction::kZero) return result;
  result.bound = grid[0];
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (direction_at(grid[k]) != result.direction) break;
    result.bound = grid[k];
  }
  return result;
}

}  // namespace edpo::epsilon
