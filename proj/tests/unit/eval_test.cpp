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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "edpo/errors.hpp"
#include "edpo/eval/eval.hpp"
#include "edpo/eval/experiment.hpp"
#include "support.hpp"

using namespace edpo;
using namespace edpo::eval;
using edpo::testing::make_space;
using edpo::testing::single_token;
using edpo::testing::small_dataset;
using policy::TabularPolicy;
using policy::TokenSeq;
namespace fs = std::filesystem;

namespace {

ExactPolicy from_probs(const policy::SequenceSpace& space,
                       const std::vector<std::vector<double>>& rows) {
  auto index = std::make_shared<const oracle::ResponseIndex>(space);
  std::vector<std::vector<double>> lp;
  for (const auto& r : rows) {
    std::vector<double> l(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) l[j] = std::log(r[j]);
    lp.push_back(l);
  }
  return ExactPolicy(index, lp, std::vector<double>(rows.size(), 0.0));
}

// Tabular single-token policy whose softmax is `p`.
TabularPolicy from_probs_tabular(const std::vector<double>& p) {
  std::vector<double> logits(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) logits[j] = std::log(p[j]);
  return single_token(1, logits);
}

ParetoPoint point(double kl, double wr, const std::string& method = "m") {
  ParetoPoint p;
  p.kl = kl;
  p.win_rate = wr;
  p.method = method;
  return p;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("edpo_eval_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.name = "tiny";
  c.task.vocab_size = 3;
  c.task.max_len = 2;
  c.task.num_prompts = 3;
  c.task.n_train = 64;
  c.task.n_test = 32;
  c.train.epochs = 1;
  c.train.batch_size = 16;
  c.eval.eps_points = 10;
  c.sweep.betas = {0.05, 0.1};
  c.sweep.eps = {0.01, 0.02};
  return c;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("KL of a policy with itself is zero") {
  const auto p = TabularPolicy::random(make_space(3, 2, 2), 1.0, 1);
  const std::vector<std::size_t> prompts{0, 1};
  CHECK(forward_kl(p, p, prompts, KlMode::kExact) == 0.0);
}

TEST_CASE("two-point KL example") {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> q{0.1, 0.9};
  const double expected = 0.5 * std::log(5.0) + 0.5 * std::log(5.0 / 9.0);
  CHECK(kl_divergence(p, q) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.5108).epsilon(1e-4));
  const std::vector<std::size_t> prompts{0};
  CHECK(forward_kl(from_probs_tabular(p), from_probs_tabular(q), prompts, KlMode::kExact) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("KL reports infinity on a support violation") {
  const auto space = make_space(2, 1, 1);
  const std::vector<std::size_t> prompts{0};
  CHECK(std::isinf(forward_kl(from_probs(space, {{0.5, 0.5}}),
                              from_probs(space, {{1.0, 0.0}}), prompts)));
  CHECK(std::isinf(kl_divergence(std::vector<double>{0.5, 0.5},
                                 std::vector<double>{1.0, 0.0})));
  CHECK(kl_divergence(std::vector<double>{1.0, 0.0},
                      std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)));
}

TEST_CASE("MC KL is unbiased") {
  const std::vector<double> p{0.2, 0.3, 0.5};
  const std::vector<double> q{0.6, 0.3, 0.1};
  policy::Rng rng(1);
  double mean = 0.0;
  const int reps = 400;
  for (int k = 0; k < reps; ++k) mean += kl_divergence_mc(p, q, 100, rng) / reps;
  CHECK(mean == doctest::Approx(kl_divergence(p, q)).epsilon(0.02));
}

TEST_CASE("policy MC KL tracks the exact value") {
  const auto space = make_space(3, 2, 2, true);
  const auto ref = TabularPolicy::random(space, 1.0, 1);
  const auto pol = TabularPolicy::random(space, 1.0, 2);
  const std::vector<std::size_t> prompts{0, 1};
  const double exact = forward_kl(ref, pol, prompts, KlMode::kExact);
  const double mc = forward_kl(ref, pol, prompts, KlMode::kMonteCarlo, 10000, 3);
  CHECK(std::abs(mc - exact) < 0.05);
  CHECK(forward_kl(ref, pol, prompts, KlMode::kMonteCarlo, 10000, 3) == mc);
  CHECK(kl_mode_from_string("mc") == KlMode::kMonteCarlo);
  CHECK_THROWS_AS(kl_mode_from_string("approx"), ConfigError);
}

TEST_CASE("win rate against itself is one half") {
  const auto space = make_space(3, 2, 2);
  const auto r = RewardSpec::random_additive(space, 1.0, 1);
  const auto p = oracle::exact_policy_of(TabularPolicy::random(space, 1.0, 2));
  const std::vector<std::size_t> prompts{0, 1};
  CHECK(exact_win_rate(p, p, r, prompts) == doctest::Approx(0.5).epsilon(1e-14));
  const auto det = [](std::size_t, policy::Rng&) { return TokenSeq{1, 1}; };
  policy::Rng rng(4);
  CHECK(win_rate(det, det, r, prompts, rng, 100) == 0.5);
}

TEST_CASE("argmax policy beats a strictly worse baseline every time") {
  const auto space = make_space(2, 1, 1);
  const auto r = RewardSpec::tabulated(space, {{0.0, 1.0}});
  const std::vector<std::size_t> prompts{0};
  const auto best = [](std::size_t, policy::Rng&) { return TokenSeq{1}; };
  const auto worst = [](std::size_t, policy::Rng&) { return TokenSeq{0}; };
  policy::Rng rng(5);
  CHECK(win_rate(best, worst, r, prompts, rng, 50) == 1.0);
  CHECK(exact_win_rate(from_probs(space, {{1e-300, 1.0}}), from_probs(space, {{1.0, 1e-300}}),
                       r, prompts) == doctest::Approx(1.0));
}

TEST_CASE("sampled win rate converges to the exact value") {
  const auto space = make_space(3, 2, 2);
  const auto r = RewardSpec::random_additive(space, 1.0, 1);
  const auto a = oracle::exact_policy_of(TabularPolicy::random(space, 1.0, 2));
  const auto b = oracle::exact_policy_of(TabularPolicy::random(space, 1.0, 3));
  const std::vector<std::size_t> prompts{0, 1};
  policy::Rng rng(6);
  const double mc = win_rate(oracle::exact_sampler(a), oracle::exact_sampler(b), r,
                             prompts, rng, 20000);
  CHECK(mc == doctest::Approx(exact_win_rate(a, b, r, prompts)).epsilon(0.03));
}

TEST_CASE("identical policies form one zero-margin class") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 2), 1.0, 1);
  const auto data = small_dataset(ref, 50, 2).triplets();
  const auto report = margin_by_monotonicity(ref, ref, data, 0.1, 0.01);
  CHECK(report.of(epsilon::Direction::kZero).count == 50);
  CHECK(report.of(epsilon::Direction::kZero).mean == 0.0);
  CHECK_FALSE(report.of(epsilon::Direction::kMinus).present());
  CHECK_FALSE(report.of(epsilon::Direction::kPlus).present());
  std::ostringstream out;
  write_monotonicity_csv(out, report);
  CHECK(out.str().find("-1,0,,,,") != std::string::npos);
}

TEST_CASE("margin classes agree with per-instance decisions") {
  const auto space = make_space(3, 2, 3);
  const auto ref = TabularPolicy::random(space, 1.0, 1);
  const auto pol = TabularPolicy::random(space, 1.0, 2);
  const auto data = small_dataset(ref, 200, 3).triplets();
  const auto report = margin_by_monotonicity(pol, ref, data, 0.1, 0.01);
  std::array<std::vector<double>, 3> groups;
  for (const auto& t : data) {
    const auto d = epsilon::select_beta(
        epsilon::perturbed_z(dpo::collect_logits(pol, ref, t), 0.01), 0.1, 0.01);
    groups[static_cast<int>(d.direction) + 1].push_back(
        dpo::implicit_reward_margin(t, pol, ref, 0.1));
  }
  for (int k = 0; k < 3; ++k) {
    const auto& c = report.classes[k];
    REQUIRE(c.count == groups[k].size());
    if (c.count < 2) continue;
    double mean = 0.0;
    for (double v : groups[k]) mean += v / groups[k].size();
    double ss = 0.0;
    for (double v : groups[k]) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (groups[k].size() - 1));
    CHECK(c.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(c.std_dev == doctest::Approx(sd).epsilon(1e-10));
    CHECK(c.ci_high - c.ci_low == doctest::Approx(2 * 1.96 * sd / std::sqrt(c.count)).epsilon(1e-10));
  }
}

TEST_CASE("epsilon bound summary counts every instance once") {
  const auto space = make_space(3, 2, 3);
  const auto ref = TabularPolicy::random(space, 1.0, 1);
  const auto pol = TabularPolicy::random(space, 1.0, 2);
  const auto data = small_dataset(ref, 60, 3).triplets();
  const auto s = epsilon_bound_summary(pol, ref, data, 0.005, 0.02, 20);
  CHECK(s.count_down + s.count_up + s.count_none == 60);
  if (s.count_down > 0) {
    CHECK(s.mean_down >= 0.005);
    CHECK(s.mean_down <= 0.02 + 1e-15);
  }
}

TEST_CASE("Pareto examples") {
  std::vector<ParetoPoint> one{point(0.3, 0.6)};
  mark_dominated(one);
  CHECK_FALSE(one[0].dominated);
  std::vector<ParetoPoint> two{point(1.0, 0.6), point(0.5, 0.7)};
  mark_dominated(two);
  CHECK(two[0].dominated);
  CHECK_FALSE(two[1].dominated);
  const ParetoPoint same = point(0.5, 0.7);
  CHECK_FALSE(dominates(same, two[1]));
}

TEST_CASE("frontier matches a brute-force definition") {
  policy::Rng rng(9);
  std::uniform_int_distribution<int> grid(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ParetoPoint> pts(8);
    for (auto& p : pts) {
      p.kl = grid(rng) / 6.0;
      p.win_rate = grid(rng) / 6.0;
    }
    const auto f = frontier(pts);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      bool dom = false;
      for (std::size_t j = 0; j < pts.size(); ++j) {
        const auto& a = pts[j];
        const auto& b = pts[i];
        if (a.kl <= b.kl && a.win_rate >= b.win_rate &&
            (a.kl < b.kl || a.win_rate > b.win_rate)) {
          dom = true;
        }
      }
      expected += dom ? 0 : 1;
    }
    CHECK(f.size() == expected);
    for (std::size_t i = 1; i < f.size(); ++i) {
      CHECK(f[i - 1].kl <= f[i].kl);
      CHECK(f[i - 1].win_rate <= f[i].win_rate);
    }
  }
}

TEST_CASE("Pareto table and plot") {
  std::vector<ParetoPoint> pts{point(0.2, 0.6, "edpo"), point(0.3, 0.55, "dpo")};
  for (auto& p : pts) {
    p.beta0 = 0.1;
    p.eps = 0.01;
  }
  pts[0].config_hash = "h1";
  pts[1].config_hash = "h2";
  std::ostringstream csv;
  write_pareto_csv(csv, pts);
  CHECK(csv.str() ==
        "method,beta0,eps,seed,kl,win_rate,dominated,config_hash\n"
        "dpo,0.1,0.01,0,0.3,0.55,1,h2\n"
        "edpo,0.1,0.01,0,0.2,0.6,0,h1\n");
  std::ostringstream svg;
  write_pareto_svg(svg, pts);
  CHECK(svg.str().rfind("<svg", 0) == 0);
  CHECK(svg.str().find("</svg>") != std::string::npos);
}

TEST_CASE("evaluation reports round trip") {
  EvalReport r;
  r.method = "edpo";
  r.beta0 = 0.1;
  r.eps = 0.01;
  r.beta_final = 0.0987654321;
  r.forward_kl = 1.0 / 3.0;
  r.win_rate = 0.61;
  r.eps_bounds.count_down = 4;
  r.eps_bounds.mean_down = 0.0125;
  r.seed = 7;
  r.config_hash = "00ff00ff00ff00ff";
  std::stringstream ss;
  write_eval_csv(ss, std::span<const EvalReport>(&r, 1));
  const auto back = read_eval_csv(ss);
  REQUIRE(back.size() == 1);
  CHECK(back[0].forward_kl == r.forward_kl);
  CHECK(back[0].beta_final == r.beta_final);
  CHECK(back[0].eps_bounds.count_down == 4);
  CHECK(back[0].config_hash == r.config_hash);
}

TEST_CASE("experiment configs reject unknown keys and versions") {
  auto j = to_json(tiny_config());
  CHECK(config_from_json(j).name == "tiny");
  auto extra = j;
  extra["task"]["colour"] = "red";
  CHECK_THROWS_AS(config_from_json(extra), ConfigError);
  auto version = j;
  version["schema_version"] = 2;
  CHECK_THROWS_AS(config_from_json(version), ConfigError);
  auto missing = j;
  missing.erase("schema_version");
  CHECK_THROWS_AS(config_from_json(missing), ConfigError);
  auto bad = j;
  bad["train"]["method"] = "sft";
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
  const auto c = tiny_config();
  const auto h = config_hash(c);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(config_hash(config_from_json(to_json(c))) == h);
  auto d = c;
  d.train.seed = 1;
  CHECK(config_hash(d) != h);
}

TEST_CASE("one run writes its artifacts") {
  const auto config = tiny_config();
  const auto task = build_task(config.task);
  const auto data = generate_data(config.task, task);
  CHECK(data.train.size() == 64);
  CHECK(data.test.size() == 32);
  const auto dir = scratch("run");
  const auto run = run_experiment(config, data.train, data.test, dir);
  for (const char* f : {"config.json", "metrics.csv", "timing.csv", "reference.ckpt",
                        "final.ckpt", "eval.csv", "summary.json", "train.jsonl",
                        "test.jsonl"}) {
    CHECK(fs::exists(dir / f));
  }
  CHECK(run.report.forward_kl >= 0.0);
  CHECK(run.report.win_rate > 0.0);
  CHECK(load_config(dir / "config.json").name == "tiny");
  fs::remove_all(dir);
}

TEST_CASE("sweeps cover the grid and analysis reads them back") {
  auto config = tiny_config();
  const auto dir = scratch("sweep");
  const auto entries = run_sweep(config, dir, 2);
  CHECK(entries.size() == 2 + 4);
  std::set<std::string> names;
  for (const auto& e : entries) {
    CHECK(e.status == "ok");
    names.insert(e.run);
  }
  CHECK(names.count(run_name("dpo", 0.05, 0.01, 0)) == 1);
  CHECK(names.count(run_name("edpo", 0.1, 0.02, 0)) == 1);
  CHECK(fs::exists(dir / "manifest.csv"));
  const auto out = dir / "analysis";
  const auto result = analyze_runs(dir / "runs", out);
  CHECK(result.runs == 6);
  for (const char* f : {"pareto.csv", "pareto.svg", "occurrence.csv", "eps_bounds.csv",
                        "monotonicity.csv"}) {
    CHECK(fs::exists(out / f));
  }
  fs::remove_all(dir);
}

TEST_CASE("analysis of an empty directory finds no runs") {
  const auto dir = scratch("empty");
  fs::create_directories(dir);
  CHECK_THROWS_AS(analyze_runs(dir, dir / "out"), NoRunsFound);
  fs::remove_all(dir);
}

}  // TEST_SUITE
