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

#include "edpo/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "edpo/errors.hpp"
#include "edpo/trainer/trainer.hpp"

namespace edpo::eval {
namespace {

using trainer::format_double;

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_prompts(std::span<const std::size_t> prompts,
                   const policy::SequenceSpace& space) {
  if (prompts.empty()) throw ArgumentError("prompt set is empty");
  for (std::size_t x : prompts) space.check_prompt(x);
}

double judge(double r_policy, double r_baseline) {
  if (r_policy > r_baseline) return 1.0;
  if (r_policy == r_baseline) return 0.5;
  return 0.0;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

const char* kEvalHeader =
    "method,beta0,eps,beta_final,beta_min_seen,beta_max_seen,forward_kl,"
    "win_rate,margin_mean,frac_minus,frac_zero,frac_plus,eps_down_count,"
    "eps_down_mean,eps_up_count,eps_up_mean,seed,config_hash";

}  // namespace

KlMode kl_mode_from_string(const std::string& name) {
  if (name == "exact") return KlMode::kExact;
  if (name == "mc") return KlMode::kMonteCarlo;
  throw ConfigError("unknown KL mode '" + name + "'");
}

std::string to_string(KlMode mode) {
  return mode == KlMode::kExact ? "exact" : "mc";
}

double forward_kl(const ExactPolicy& reference, const ExactPolicy& policy,
                  std::span<const std::size_t> prompts) {
  if (reference.space() != policy.space()) {
    throw ArgumentError("policies are defined over different spaces");
  }
  check_prompts(prompts, reference.space());
  double total = 0.0;
  for (std::size_t x : prompts) {
    const auto& lp_ref = reference.log_probs(x);
    const auto& lp = policy.log_probs(x);
    double kl = 0.0;
    for (std::size_t j = 0; j < lp_ref.size(); ++j) {
      if (lp_ref[j] == -kInf) continue;
      if (lp[j] == -kInf) return kInf;
      kl += std::exp(lp_ref[j]) * (lp_ref[j] - lp[j]);
    }
    total += std::max(kl, 0.0);
  }
  return total / static_cast<double>(prompts.size());
}

double forward_kl(const Policy& reference, const Policy& policy,
                  std::span<const std::size_t> prompts, KlMode mode,
                  std::size_t n_samples, std::uint64_t seed) {
  policy::check_compatible(reference, policy);
  check_prompts(prompts, reference.space());
  if (mode == KlMode::kExact) {
    return forward_kl(oracle::exact_policy_of(reference),
                      oracle::exact_policy_of(policy), prompts);
  }
  if (n_samples == 0) throw ArgumentError("MC KL needs at least one sample");
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t x : prompts) {
    double acc = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
      const auto y = policy::sample(reference, x, rng, reference.space().max_len);
      const double lp = policy::seq_logprob(policy, x, y.tokens);
      if (lp == -kInf) return kInf;
      acc += policy::seq_logprob(reference, x, y.tokens) - lp;
    }
    total += acc / static_cast<double>(n_samples);
  }
  return total / static_cast<double>(prompts.size());
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ArgumentError("KL: length mismatch");
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    if (q[j] == 0.0) return kInf;
    kl += p[j] * std::log(p[j] / q[j]);
  }
  return std::max(kl, 0.0);
}

double kl_divergence_mc(std::span<const double> p, std::span<const double> q,
                        std::size_t n, Rng& rng) {
  if (p.size() != q.size()) throw ArgumentError("KL: length mismatch");
  if (n == 0) throw ArgumentError("MC KL needs at least one sample");
  std::vector<double> log_p(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) log_p[j] = std::log(p[j]);
  double acc = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t j = policy::sample_categorical(log_p, rng);
    if (q[j] == 0.0) return kInf;
    acc += std::log(p[j] / q[j]);
  }
  return acc / static_cast<double>(n);
}

double win_rate(const ResponseSampler& policy, const ResponseSampler& baseline,
                const RewardSpec& reward, std::span<const std::size_t> prompts,
                Rng& rng, std::size_t n) {
  if (n == 0) throw ArgumentError("win rate needs at least one comparison");
  check_prompts(prompts, reward.space());
  double wins = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t x = prompts[k % prompts.size()];
    const auto a = policy(x, rng);
    const auto b = baseline(x, rng);
    wins += judge(reward.reward(x, a), reward.reward(x, b));
  }
  return wins / static_cast<double>(n);
}

double exact_win_rate(const ExactPolicy& policy, const ExactPolicy& baseline,
                      const RewardSpec& reward,
                      std::span<const std::size_t> prompts) {
  check_prompts(prompts, reward.space());
  double total = 0.0;
  for (std::size_t x : prompts) {
    const auto p = policy.probs(x);
    const auto q = baseline.probs(x);
    const auto& r = reward.row(x);
    double w = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      double inner = 0.0;
      for (std::size_t b = 0; b < q.size(); ++b) inner += q[b] * judge(r[a], r[b]);
      w += p[a] * inner;
    }
    total += w;
  }
  return total / static_cast<double>(prompts.size());
}

MonotonicityReport margin_by_monotonicity(
    const Policy& policy, const Policy& reference,
    std::span<const PreferenceTriplet> dataset, double beta, double eps) {
  std::array<std::vector<double>, 3> groups;
  for (const auto& t : dataset) {
    const auto logits = dpo::collect_logits(policy, reference, t);
    const auto est = epsilon::perturbed_z(logits, eps);
    const auto d = epsilon::select_beta(est, beta, eps);
    const double gamma =
        policy::seq_logprob_from_logits(logits.chosen.reference, t.chosen) -
        policy::seq_logprob_from_logits(logits.rejected.reference, t.rejected);
    groups[static_cast<int>(d.direction) + 1].push_back(beta * (est.z_zero - gamma));
  }
  MonotonicityReport report;
  for (int k = 0; k < 3; ++k) {
    MarginClass& c = report.classes[k];
    c.direction = k - 1;
    const auto& g = groups[k];
    c.count = g.size();
    if (g.empty()) continue;
    double sum = 0.0;
    for (double v : g) sum += v;
    c.mean = sum / static_cast<double>(g.size());
    double ss = 0.0;
    for (double v : g) ss += (v - c.mean) * (v - c.mean);
    c.std_dev = g.size() > 1 ? std::sqrt(ss / static_cast<double>(g.size() - 1)) : 0.0;
    const double half = 1.96 * c.std_dev / std::sqrt(static_cast<double>(g.size()));
    c.ci_low = c.mean - half;
    c.ci_high = c.mean + half;
  }
  return report;
}

void write_monotonicity_csv(std::ostream& out, const MonotonicityReport& report) {
  out << "direction,count,mean,std,ci_low,ci_high\n";
  for (const MarginClass& c : report.classes) {
    out << c.direction << ',' << c.count;
    if (c.present()) {
      out << ',' << format_double(c.mean) << ',' << format_double(c.std_dev)
          << ',' << format_double(c.ci_low) << ',' << format_double(c.ci_high);
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
}

EpsilonBoundSummary epsilon_bound_summary(
    const Policy& policy, const Policy& reference,
    std::span<const PreferenceTriplet> dataset, double lo, double hi,
    std::size_t n_points) {
  EpsilonBoundSummary s;
  double sum_down = 0.0;
  double sum_up = 0.0;
  for (const auto& t : dataset) {
    const auto logits = dpo::collect_logits(policy, reference, t);
    const auto b = epsilon::epsilon_upper_bound(logits, lo, hi, n_points);
    if (b.direction == epsilon::Direction::kMinus) {
      ++s.count_down;
      sum_down += *b.bound;
    } else if (b.direction == epsilon::Direction::kPlus) {
      ++s.count_up;
      sum_up += *b.bound;
    } else {
      ++s.count_none;
    }
  }
  if (s.count_down) s.mean_down = sum_down / static_cast<double>(s.count_down);
  if (s.count_up) s.mean_up = sum_up / static_cast<double>(s.count_up);
  return s;
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.kl <= b.kl && a.win_rate >= b.win_rate &&
         (a.kl < b.kl || a.win_rate > b.win_rate);
}

void mark_dominated(std::vector<ParetoPoint>& points) {
  for (auto& p : points) {
    p.dominated = false;
    for (const auto& q : points) {
      if (&p != &q && dominates(q, p)) {
        p.dominated = true;
        break;
      }
    }
  }
}

std::vector<ParetoPoint> frontier(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> marked = points;
  mark_dominated(marked);
  std::vector<ParetoPoint> out;
  for (const auto& p : marked) {
    if (!p.dominated) out.push_back(p);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.kl, a.win_rate) < std::tie(b.kl, b.win_rate);
  });
  return out;
}

void write_pareto_csv(std::ostream& out, std::vector<ParetoPoint> points) {
  mark_dominated(points);
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return std::tie(a.method, a.beta0, a.eps, a.seed) <
           std::tie(b.method, b.beta0, b.eps, b.seed);
  });
  out << "method,beta0,eps,seed,kl,win_rate,dominated,config_hash\n";
  for (const auto& p : points) {
    out << p.method << ',' << format_double(p.beta0) << ','
        << format_double(p.eps) << ',' << p.seed << ',' << format_double(p.kl)
        << ',' << format_double(p.win_rate) << ',' << (p.dominated ? 1 : 0)
        << ',' << p.config_hash << '\n';
  }
}

void write_pareto_svg(std::ostream& out, const std::vector<ParetoPoint>& points) {
  const double width = 640, height = 440;
  const double left = 70, right = 150, top = 30, bottom = 60;
  const double pw = width - left - right, ph = height - top - bottom;
  double kl_max = 0.0, wr_min = 1.0, wr_max = 0.0;
  for (const auto& p : points) {
    if (std::isfinite(p.kl)) kl_max = std::max(kl_max, p.kl);
    wr_min = std::min(wr_min, p.win_rate);
    wr_max = std::max(wr_max, p.win_rate);
  }
  if (kl_max <= 0.0) kl_max = 1.0;
  if (wr_max <= wr_min) {
    wr_min -= 0.05;
    wr_max += 0.05;
  }
  kl_max *= 1.05;
  const double pad = 0.05 * (wr_max - wr_min);
  wr_min -= pad;
  wr_max += pad;
  auto sx = [&](double kl) { return left + pw * std::min(kl, kl_max) / kl_max; };
  auto sy = [&](double wr) {
    return top + ph * (1.0 - (wr - wr_min) / (wr_max - wr_min));
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  std::map<std::string, std::vector<ParetoPoint>> by_method;
  for (const auto& p : points) by_method[p.method].push_back(p);

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw
      << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double kl = kl_max * k / 4.0;
    const double wr = wr_min + (wr_max - wr_min) * k / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", kl);
    out << "<text x=\"" << sx(kl) << "\" y=\"" << top + ph + 18
        << "\" text-anchor=\"middle\">" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3f", wr);
    out << "<text x=\"" << left - 6 << "\" y=\"" << sy(wr) + 4
        << "\" text-anchor=\"end\">" << buf << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\">forward KL(ref || policy)</text>\n";
  out << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 18 " << top + ph / 2 << ")\">win rate</text>\n";
  std::size_t color = 0;
  for (const auto& [method, pts] : by_method) {
    const char* c = kColors[color % 6];
    const auto front = frontier(pts);
    out << "<polyline fill=\"none\" stroke=\"" << c << "\" points=\"";
    for (const auto& p : front) out << sx(p.kl) << ',' << sy(p.win_rate) << ' ';
    out << "\"/>\n";
    for (const auto& p : pts) {
      out << "<circle cx=\"" << sx(p.kl) << "\" cy=\"" << sy(p.win_rate)
          << "\" r=\"4\" fill=\"" << c << "\"/>\n";
    }
    const double ly = top + 16.0 * static_cast<double>(color);
    out << "<circle cx=\"" << left + pw + 20 << "\" cy=\"" << ly
        << "\" r=\"4\" fill=\"" << c << "\"/>\n";
    out << "<text x=\"" << left + pw + 30 << "\" y=\"" << ly + 4 << "\">"
        << method << "</text>\n";
    ++color;
  }
  out << "</svg>\n";
}

void write_eval_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << kEvalHeader << '\n';
  for (const auto& r : reports) {
    out << r.method << ',' << format_double(r.beta0) << ','
        << format_double(r.eps) << ',' << format_double(r.beta_final) << ','
        << format_double(r.beta_min_seen) << ','
        << format_double(r.beta_max_seen) << ','
        << format_double(r.forward_kl) << ',' << format_double(r.win_rate)
        << ',' << format_double(r.margin_mean) << ','
        << format_double(r.frac_minus) << ',' << format_double(r.frac_zero)
        << ',' << format_double(r.frac_plus) << ',' << r.eps_bounds.count_down
        << ',' << format_double(r.eps_bounds.mean_down) << ','
        << r.eps_bounds.count_up << ',' << format_double(r.eps_bounds.mean_up)
        << ',' << r.seed << ',' << r.config_hash << '\n';
  }
}

std::vector<EvalReport> read_eval_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kEvalHeader) {
    throw ParseError("unexpected eval CSV header", line_no);
  }
  std::vector<EvalReport> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 18) throw ParseError("expected 18 columns", line_no);
    try {
      EvalReport r;
      r.method = cells[0];
      r.beta0 = std::stod(cells[1]);
      r.eps = std::stod(cells[2]);
      r.beta_final = std::stod(cells[3]);
      r.beta_min_seen = std::stod(cells[4]);
      r.beta_max_seen = std::stod(cells[5]);
      r.forward_kl = std::stod(cells[6]);
      r.win_rate = std::stod(cells[7]);
      r.margin_mean = std::stod(cells[8]);
      r.frac_minus = std::stod(cells[9]);
      r.frac_zero = std::stod(cells[10]);
      r.frac_plus = std::stod(cells[11]);
      r.eps_bounds.count_down = std::stoull(cells[12]);
      r.eps_bounds.mean_down = std::stod(cells[13]);
      r.eps_bounds.count_up = std::stoull(cells[14]);
      r.eps_bounds.mean_up = std::stod(cells[15]);
      r.seed = std::stoull(cells[16]);
      r.config_hash = cells[17];
      out.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ParseError(std::string("bad value: ") + e.what(), line_no);
    }
  }
  return out;
}

}  // namespace edpo::eval
