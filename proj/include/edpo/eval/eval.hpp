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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edpo/dpo/dpo.hpp"
#include "edpo/epsilon/epsilon_control.hpp"
#include "edpo/oracle/oracle.hpp"
#include "edpo/policy/policy.hpp"

namespace edpo::eval {

using dpo::PreferenceTriplet;
using oracle::ExactPolicy;
using oracle::ResponseSampler;
using oracle::RewardSpec;
using policy::Policy;
using policy::Rng;

enum class KlMode { kExact, kMonteCarlo };

// Throws ConfigError for an unknown name.
KlMode kl_mode_from_string(const std::string& name);
std::string to_string(KlMode mode);

// D_KL(pi_ref || pi_theta) averaged over `prompts`. Exact mode enumerates the
// response space; MC mode averages log(pi_ref / pi_theta) over n_samples
// draws from pi_ref per prompt. Returns +inf when pi_theta assigns zero
// probability to a response pi_ref can produce.
double forward_kl(const Policy& reference, const Policy& policy,
                  std::span<const std::size_t> prompts, KlMode mode,
                  std::size_t n_samples = 0, std::uint64_t seed = 0);
double forward_kl(const ExactPolicy& reference, const ExactPolicy& policy,
                  std::span<const std::size_t> prompts);
// KL between two probability vectors on the same support.
double kl_divergence(std::span<const double> p, std::span<const double> q);
// MC estimate of KL(p || q) from n draws of p.
double kl_divergence_mc(std::span<const double> p, std::span<const double> q,
                        std::size_t n, Rng& rng);

// Fraction of n draws (prompt cycled through `prompts`) where the policy's
// response has higher ground-truth reward than the baseline's; ties count
// one half.
double win_rate(const ResponseSampler& policy, const ResponseSampler& baseline,
                const RewardSpec& reward, std::span<const std::size_t> prompts,
                Rng& rng, std::size_t n);
// Expected value of the same statistic by enumeration, averaged over prompts.
double exact_win_rate(const ExactPolicy& policy, const ExactPolicy& baseline,
                      const RewardSpec& reward,
                      std::span<const std::size_t> prompts);

struct MarginClass {
  int direction = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double std_dev = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;

  bool present() const { return count > 0; }
};

struct MonotonicityReport {
  std::array<MarginClass, 3> classes;  // indexed by direction + 1

  const MarginClass& of(epsilon::Direction d) const {
    return classes[static_cast<int>(d) + 1];
  }
};

// Groups instances by their selection direction at eps and summarizes the
// implicit reward margin beta * (z - gamma) per group. The 95% interval is
// mean +/- 1.96 * s / sqrt(n) with the sample standard deviation s.
MonotonicityReport margin_by_monotonicity(
    const Policy& policy, const Policy& reference,
    std::span<const PreferenceTriplet> dataset, double beta, double eps);

// Columns: direction, count, mean, std, ci_low, ci_high. Absent classes
// have count 0 and empty statistics.
void write_monotonicity_csv(std::ostream& out, const MonotonicityReport& report);

struct EpsilonBoundSummary {
  std::size_t count_down = 0;  // instances with direction -1 at the smallest eps
  double mean_down = 0.0;
  std::size_t count_up = 0;
  double mean_up = 0.0;
  std::size_t count_none = 0;
};

EpsilonBoundSummary epsilon_bound_summary(
    const Policy& policy, const Policy& reference,
    std::span<const PreferenceTriplet> dataset, double lo = 0.005,
    double hi = 0.02, std::size_t n_points = 100);

struct ParetoPoint {
  double kl = 0.0;
  double win_rate = 0.0;
  std::string method;
  double beta0 = 0.0;
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  bool dominated = false;
};

// a dominates b when a.kl <= b.kl and a.win_rate >= b.win_rate with at
// least one strict inequality.
bool dominates(const ParetoPoint& a, const ParetoPoint& b);
// Sets each point's dominated flag against all other points.
void mark_dominated(std::vector<ParetoPoint>& points);
// Points of `points` not dominated by any other point in `points`.
std::vector<ParetoPoint> frontier(const std::vector<ParetoPoint>& points);

// Columns: method, beta0, eps, seed, kl, win_rate, dominated, config_hash.
// Rows sorted by (method, beta0, eps, seed).
void write_pareto_csv(std::ostream& out, std::vector<ParetoPoint> points);
// Scatter of win rate against KL with one color per method and each
// method's frontier drawn as a line.
void write_pareto_svg(std::ostream& out, const std::vector<ParetoPoint>& points);

struct EvalReport {
  std::string method;
  double beta0 = 0.0;
  double eps = 0.0;
  double beta_final = 0.0;
  double beta_min_seen = 0.0;
  double beta_max_seen = 0.0;
  double forward_kl = 0.0;
  double win_rate = 0.0;
  double margin_mean = 0.0;
  double frac_minus = 0.0;
  double frac_zero = 0.0;
  double frac_plus = 0.0;
  EpsilonBoundSummary eps_bounds;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// One header row and one row per report.
void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports);
std::vector<EvalReport> read_eval_csv(std::istream& in);

}  // namespace edpo::eval
