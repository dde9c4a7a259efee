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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "edpo/errors.hpp"
#include "edpo/trainer/trainer.hpp"
#include "support.hpp"

using namespace edpo;
using namespace edpo::trainer;
using edpo::testing::make_space;
using edpo::testing::metrics_text;
using edpo::testing::single_token;
using edpo::testing::small_dataset;
using policy::TabularPolicy;

namespace {

TrainConfig quick(Method method) {
  TrainConfig c;
  c.method = method;
  c.epochs = 1;
  c.batch_size = 16;
  return c;
}

// Each pair in both orientations with label 1/2.
std::vector<PreferenceTriplet> symmetric(const std::vector<PreferenceTriplet>& base,
                                         double label) {
  std::vector<PreferenceTriplet> out;
  for (const auto& t : base) {
    out.push_back({t.prompt, t.chosen, t.rejected, label});
    out.push_back({t.prompt, t.rejected, t.chosen, label});
  }
  return out;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("method and scheduler names") {
  for (auto m : {Method::kDpo, Method::kEpsilonDpo, Method::kTrDpo, Method::kBetaDpo}) {
    CHECK(method_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(method_from_string("ppo"), ConfigError);
}

TEST_CASE("config validation and JSON round trip") {
  TrainConfig c;
  c.eps_step = 0.02;
  c.beta_max = 0.5;
  c.checkpoint_every = 0.25;
  const auto back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.eps_s() == 0.02);
  CHECK(back.eps_c() == c.eps);
  auto j = to_json(c);
  j["unexpected"] = 1;
  CHECK_THROWS_AS(train_config_from_json(j), ConfigError);
  c.beta = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.eps = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("warm-up then cosine schedule") {
  TrainConfig c;
  c.learning_rate = 1.0;
  c.warmup_ratio = 0.1;
  CHECK(scheduled_lr(c, 0, 100) == doctest::Approx(0.1));
  CHECK(scheduled_lr(c, 9, 100) == doctest::Approx(1.0));
  CHECK(scheduled_lr(c, 10, 100) == doctest::Approx(1.0));
  CHECK(scheduled_lr(c, 55, 100) == doctest::Approx(0.5));
  CHECK(scheduled_lr(c, 99, 100) > 0.0);
  c.scheduler = Scheduler::kConstant;
  CHECK(scheduled_lr(c, 99, 100) == 1.0);
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<std::size_t> a(50), b(50);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 0);
  policy::Rng r1(3), r2(3);
  shuffle_indices(a, r1);
  shuffle_indices(b, r2);
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("first step from the reference has loss ln 2") {
  const auto ref = TabularPolicy::random(make_space(3, 3, 4), 1.0, 1);
  const auto data = small_dataset(ref, 64, 2).triplets();
  for (auto m : {Method::kDpo, Method::kEpsilonDpo, Method::kTrDpo, Method::kBetaDpo}) {
    const auto r = run_training(quick(m), data, ref);
    CHECK(r.metrics.front().loss == std::log(2.0));
  }
}

TEST_CASE("one epoch takes ceil(N / B) steps") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 4), 1.0, 1);
  const auto data = small_dataset(ref, 300, 2).triplets();
  auto c = quick(Method::kDpo);
  c.batch_size = 128;
  CHECK(run_training(c, data, ref).metrics.size() == 3);
  c.epochs = 2;
  CHECK(run_training(c, data, ref).metrics.size() == 6);
}

TEST_CASE("DPO keeps beta fixed") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 4), 1.0, 1);
  const auto data = small_dataset(ref, 128, 2).triplets();
  const auto r = run_training(quick(Method::kDpo), data, ref);
  for (const auto& m : r.metrics) {
    CHECK(m.beta_after == 0.1);
    CHECK(m.frac_zero == 1.0);
  }
  CHECK(r.final_beta == 0.1);
}

TEST_CASE("one optimizer step matches a hand computation") {
  // Uniform reference and a single hard-label pair: dL/df_w = -beta / 2,
  // dL/df_l = +beta / 2, zero elsewhere.
  const auto ref = single_token(1, {0.0, 0.0, 0.0});
  const std::vector<PreferenceTriplet> data{{0, {0}, {1}, 1.0}};
  auto c = quick(Method::kDpo);
  c.scheduler = Scheduler::kConstant;
  c.learning_rate = 0.05;
  c.beta = 0.1;
  const auto r = run_training(c, data, ref);
  const auto& table = static_cast<const TabularPolicy&>(*r.policy).table();
  const double g = c.beta / 2.0;
  const double move = c.learning_rate * g / (g + c.adam.eps);
  CHECK(std::abs(table[0] - move) < 1e-10);
  CHECK(std::abs(table[1] + move) < 1e-10);
  CHECK(table[2] == 0.0);
}

TEST_CASE("runs are deterministic") {
  const auto ref = TabularPolicy::random(make_space(3, 3, 4), 1.0, 1);
  const auto data = small_dataset(ref, 100, 2).triplets();
  for (auto m : {Method::kDpo, Method::kEpsilonDpo, Method::kTrDpo, Method::kBetaDpo}) {
    auto c = quick(m);
    c.epochs = 2;
    const auto a = run_training(c, data, ref);
    const auto b = run_training(c, data, ref);
    CHECK(metrics_text(a) == metrics_text(b));
    CHECK(policy::parameters_bit_equal(*a.policy, *b.policy));
  }
}

TEST_CASE("seed changes the batch order") {
  const auto ref = TabularPolicy::random(make_space(3, 3, 4), 1.0, 1);
  const auto data = small_dataset(ref, 100, 2).triplets();
  auto c = quick(Method::kDpo);
  const auto a = run_training(c, data, ref);
  c.seed = 1;
  CHECK(metrics_text(run_training(c, data, ref)) != metrics_text(a));
}

TEST_CASE("epsilon-DPO without firing instances reproduces DPO") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 4), 1.0, 7);
  const auto data = symmetric(small_dataset(ref, 40, 8).triplets(), 0.5);
  auto c = quick(Method::kDpo);
  c.batch_size = data.size();
  c.epochs = 3;
  const auto dpo = run_training(c, data, ref);
  c.method = Method::kEpsilonDpo;
  const auto eps = run_training(c, data, ref);
  CHECK(metrics_text(eps) == metrics_text(dpo));
  CHECK(eps.occurrences[0] == 0);
  CHECK(eps.occurrences[2] == 0);
  CHECK(policy::parameters_bit_equal(*eps.policy, *dpo.policy));
}

TEST_CASE("hard-label symmetric pairs leave a rounding residue that fires") {
  // The two orientations' gradients cancel only up to rounding, and the
  // strict comparisons see the resulting drift.
  const auto ref = TabularPolicy::random(make_space(3, 2, 4), 1.0, 7);
  const auto data = symmetric(small_dataset(ref, 40, 8).triplets(), 1.0);
  auto c = quick(Method::kEpsilonDpo);
  c.batch_size = data.size();
  c.epochs = 3;
  const auto r = run_training(c, data, ref);
  CHECK(r.metrics[0].frac_zero == 1.0);
  CHECK(r.occurrences[0] + r.occurrences[2] > 0);
}

TEST_CASE("epsilon-DPO adds no forward passes") {
  const auto ref = TabularPolicy::random(make_space(3, 3, 4), 1.0, 1);
  const auto data = small_dataset(ref, 100, 2).triplets();
  auto c = quick(Method::kDpo);
  c.epochs = 2;
  const auto dpo = run_training(c, data, ref);
  c.method = Method::kEpsilonDpo;
  const auto eps = run_training(c, data, ref);
  REQUIRE(dpo.metrics.size() == eps.metrics.size());
  for (std::size_t s = 0; s < dpo.metrics.size(); ++s) {
    CHECK(dpo.metrics[s].fwd_passes_policy == eps.metrics[s].fwd_passes_policy);
    CHECK(dpo.metrics[s].fwd_passes_ref == eps.metrics[s].fwd_passes_ref);
  }
  CHECK(eps.metrics.back().fwd_passes_ref == 0);
  CHECK(eps.occurrences[0] + eps.occurrences[2] > 0);
}

TEST_CASE("epsilon-DPO beta follows the batch mean of decisions") {
  const auto ref = TabularPolicy::random(make_space(3, 3, 4), 1.0, 1);
  const auto data = small_dataset(ref, 64, 2).triplets();
  auto c = quick(Method::kEpsilonDpo);
  const auto r = run_training(c, data, ref);
  for (const auto& m : r.metrics) {
    const double expected = m.beta_before * (m.frac_minus / 1.01 + m.frac_zero +
                                             m.frac_plus / 0.99);
    CHECK(m.beta_after == doctest::Approx(expected).epsilon(1e-12));
    CHECK(m.frac_minus + m.frac_zero + m.frac_plus == doctest::Approx(1.0));
  }
}

TEST_CASE("non-finite loss aborts with the offending instance") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 2), 1.0, 1);
  const auto data = small_dataset(ref, 16, 2).triplets();
  auto c = quick(Method::kDpo);
  c.scheduler = Scheduler::kConstant;
  c.learning_rate = 1e308;
  c.batch_size = 4;
  CHECK_THROWS_AS(run_training(c, data, ref), RuntimeFailure);
}

TEST_CASE("training input checks") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 2), 1.0, 1);
  CHECK_THROWS_AS(run_training(quick(Method::kDpo), {}, ref), ArgumentError);
  const std::vector<PreferenceTriplet> bad{{0, {0, 1}, {0, 1}, 1.0}};
  CHECK_THROWS_AS(run_training(quick(Method::kDpo), bad, ref), ArgumentError);
}

TEST_CASE("metrics table layout") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 2), 1.0, 1);
  const auto data = small_dataset(ref, 32, 2).triplets();
  const auto r = run_training(quick(Method::kEpsilonDpo), data, ref);
  std::ostringstream out;
  write_metrics_csv(out, r.metrics, {"edpo", 4, "abc"}, false);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header ==
        "step,loss,beta,margin_mean,frac_minus,frac_zero,frac_plus,"
        "fwd_passes_policy,fwd_passes_ref,wall_ms,method,seed,config_hash");
  CHECK(row.rfind("1,0.6931471805599453,", 0) == 0);
  CHECK(row.find(",0,edpo,4,abc") != std::string::npos);
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
}

TEST_CASE("checkpoints land on fractional epochs") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 2), 1.0, 1);
  const auto data = small_dataset(ref, 80, 2).triplets();
  auto c = quick(Method::kDpo);
  c.batch_size = 8;
  c.checkpoint_every = 0.5;
  RunOptions options;
  options.checkpoint_dir = std::filesystem::temp_directory_path() / "edpo_trainer_ckpt";
  std::filesystem::remove_all(options.checkpoint_dir);
  const auto r = run_training(c, data, ref, options);
  REQUIRE(r.checkpoints.size() >= 2);
  CHECK(r.checkpoints.front().step == 5);
  CHECK(r.checkpoints.back().step == 10);
  const auto last = policy::load_policy(r.checkpoints.back().path);
  CHECK(policy::parameters_bit_equal(*last, *r.policy));
  std::filesystem::remove_all(options.checkpoint_dir);
}

}  // TEST_SUITE
