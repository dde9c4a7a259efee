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
#include <vector>

#include "doctest.h"
#include "edpo/baselines/baselines.hpp"
#include "edpo/errors.hpp"
#include "support.hpp"

using namespace edpo;
using namespace edpo::baselines;
using edpo::testing::make_space;
using edpo::testing::metrics_text;
using edpo::testing::single_token;
using edpo::testing::small_dataset;
using policy::TabularPolicy;

TEST_SUITE("baselines") {

TEST_CASE("hard update fires every tau steps") {
  auto ref = TabularPolicy::random(make_space(3, 2, 1), 1.0, 1);
  const auto pol = TabularPolicy::random(make_space(3, 2, 1), 1.0, 2);
  const auto before = ref;
  const TrDpoConfig c{TrDpoMode::kHard, 128, 0.6};
  CHECK_FALSE(trdpo_maybe_update(ref, pol, 127, c));
  CHECK(policy::parameters_bit_equal(ref, before));
  CHECK(trdpo_maybe_update(ref, pol, 128, c));
  CHECK(policy::parameters_bit_equal(ref, pol));
  CHECK_THROWS_AS(trdpo_maybe_update(ref, pol, 0, c), ArgumentError);
}

TEST_CASE("soft update merges every step") {
  auto ref = single_token(1, {0.0, 0.0});
  const auto pol = single_token(1, {1.0, 1.0});
  const TrDpoConfig c{TrDpoMode::kSoft, 128, 0.6};
  CHECK(trdpo_maybe_update(ref, pol, 1, c));
  CHECK(ref.table()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(trdpo_maybe_update(ref, pol, 2, c));
  CHECK(ref.table()[0] == doctest::Approx(0.84).epsilon(1e-15));
}

TEST_CASE("zero merge weight leaves the reference untouched") {
  auto ref = single_token(1, {0.25, -1.0});
  const auto pol = single_token(1, {1.0, 1.0});
  CHECK_FALSE(trdpo_maybe_update(ref, pol, 1, {TrDpoMode::kSoft, 1, 0.0}));
  CHECK(ref.table()[0] == 0.25);
}

TEST_CASE("configuration validation") {
  CHECK_THROWS_AS((TrDpoConfig{TrDpoMode::kHard, 0, 0.6}.validate()), ConfigError);
  CHECK_THROWS_AS((TrDpoConfig{TrDpoMode::kSoft, 1, 1.5}.validate()), ConfigError);
  CHECK_THROWS_AS(trdpo_mode_from_string("medium"), ConfigError);
  CHECK(to_string(trdpo_mode_from_string("soft")) == "soft");
  CHECK_THROWS_AS((BetaDpoConfig{0.1, 1.0, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((BetaDpoConfig{0.1, 0.9, -1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((BetaDpoConfig{0.0, 0.9, 0.5}.validate()), ConfigError);
}

TEST_CASE("zero sensitivity keeps the base coefficient") {
  BetaDpoController c({0.05, 0.9, 0.0});
  for (double m : {1.0, -3.0, 12.0}) {
    const std::vector<double> margins{m, 2 * m};
    CHECK(c.batch_beta(margins) == 0.05);
  }
}

TEST_CASE("first batch has zero disparity") {
  BetaDpoController c({0.05, 0.9, 0.5});
  const std::vector<double> margins{0.3, 1.7, -0.4};
  CHECK(c.batch_beta(margins) == 0.05);
  CHECK(*c.running_mean() == doctest::Approx(1.6 / 3.0).epsilon(1e-14));
}

TEST_CASE("momentum example") {
  BetaDpoController c({0.05, 0.9, 0.5}, 0.0);
  const std::vector<double> margins{0.5, 1.5};
  CHECK(betadpo_batch_beta(c, margins) == doctest::Approx(0.0725).epsilon(1e-14));
  CHECK(*c.running_mean() == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(c.batch_beta(std::span<const double>{}), ArgumentError);
}

TEST_CASE("batch coefficient is clamped") {
  BetaDpoController c({0.1, 0.5, 100.0}, 0.0);
  const std::vector<double> margins{-5.0};
  CHECK(c.batch_beta(margins) == doctest::Approx(0.01));
  BetaDpoController up({0.1, 0.9, 100.0}, 0.0);
  const std::vector<double> big{5.0};
  CHECK(up.batch_beta(big) == doctest::Approx(1.0));
  CHECK(up.clamp_events() == 1);
}

TEST_CASE("never-firing reference updates reproduce DPO bit for bit") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 4), 1.0, 3);
  const auto data = small_dataset(ref, 200, 4).triplets();
  trainer::TrainConfig dpo;
  dpo.method = trainer::Method::kDpo;
  dpo.epochs = 2;
  dpo.batch_size = 16;
  const auto base = metrics_text(trainer::run_training(dpo, data, ref));

  auto hard = dpo;
  hard.method = trainer::Method::kTrDpo;
  hard.trdpo = {TrDpoMode::kHard, 1000000, 0.6};
  CHECK(metrics_text(trainer::run_training(hard, data, ref)) == base);

  auto soft = hard;
  soft.trdpo = {TrDpoMode::kSoft, 1, 0.0};
  CHECK(metrics_text(trainer::run_training(soft, data, ref)) == base);

  auto active = hard;
  active.trdpo = {TrDpoMode::kHard, 2, 0.6};
  CHECK(metrics_text(trainer::run_training(active, data, ref)) != base);
}

TEST_CASE("the step after a hard update starts from a tie") {
  const auto ref = TabularPolicy::random(make_space(3, 2, 4), 1.0, 5);
  const auto data = small_dataset(ref, 64, 6).triplets();
  trainer::TrainConfig c;
  c.method = trainer::Method::kTrDpo;
  c.batch_size = 16;
  c.epochs = 1;
  c.trdpo = {TrDpoMode::kHard, 2, 0.6};
  const auto r = trainer::run_training(c, data, ref);
  REQUIRE(r.metrics.size() == 4);
  CHECK(r.metrics[1].loss != doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.metrics[2].loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.metrics[2].fwd_passes_ref == 32);
  CHECK(r.metrics[1].fwd_passes_ref == 32);
}

}  // TEST_SUITE
