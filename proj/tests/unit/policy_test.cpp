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

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "doctest.h"
#include "edpo/errors.hpp"
#include "edpo/numerics/math.hpp"
#include "edpo/policy/neural.hpp"
#include "edpo/policy/policy.hpp"
#include "edpo/policy/tabular.hpp"
#include "support.hpp"

using namespace edpo;
using namespace edpo::policy;
using edpo::testing::make_space;

namespace {

double total_mass(const Policy& p, std::size_t prompt) {
  double total = 0.0;
  for (const auto& y : enumerate_responses(p.space())) {
    total += std::exp(seq_logprob(p, prompt, y));
  }
  return total;
}

// Two-token single-position policy with both logits set to v.
TabularPolicy single_token_scalar(double v) {
  return edpo::testing::single_token(1, {v, v});
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("fixed-length enumeration is lexicographic") {
  const auto all = enumerate_responses(make_space(2, 2, 1));
  REQUIRE(all.size() == 4);
  CHECK(all[0] == TokenSeq{0, 0});
  CHECK(all[3] == TokenSeq{1, 1});
}

TEST_CASE("EOS spaces allow early termination only at EOS") {
  const auto space = make_space(3, 2, 1, true);
  const auto all = enumerate_responses(space);
  CHECK(all.size() == 7);
  CHECK(space.is_response(TokenSeq{2}));
  CHECK(space.is_response(TokenSeq{0, 1}));
  CHECK_FALSE(space.is_response(TokenSeq{0}));
  CHECK_FALSE(space.is_response(TokenSeq{2, 0}));
  CHECK_FALSE(space.is_response(TokenSeq{0, 3}));
  CHECK_THROWS_AS(space.check_response(TokenSeq{}), ArgumentError);
  CHECK_THROWS_AS(space.check_prompt(1), ArgumentError);
}

TEST_CASE("tabular rows follow prompt-major, length-then-value layout") {
  TabularPolicy p(make_space(3, 3, 2));
  CHECK(p.prefixes_per_prompt() == 1 + 3 + 9);
  CHECK(p.row_index(0, TokenSeq{}) == 0);
  CHECK(p.row_index(0, TokenSeq{2}) == 3);
  CHECK(p.row_index(0, TokenSeq{1, 2}) == 4 + 5);
  CHECK(p.row_index(1, TokenSeq{}) == 13);
}

TEST_CASE("sequence probabilities sum to one") {
  const auto tab = TabularPolicy::random(make_space(3, 3, 2), 1.5, 4);
  CHECK(total_mass(tab, 1) == doctest::Approx(1.0).epsilon(1e-12));
  const auto tab_eos = TabularPolicy::random(make_space(4, 3, 2, true), 1.5, 5);
  CHECK(total_mass(tab_eos, 0) == doctest::Approx(1.0).epsilon(1e-12));
  NeuralConfig nc;
  nc.dim = 6;
  nc.layers = 2;
  nc.seed = 3;
  NeuralPolicy net(make_space(4, 3, 2, true), nc);
  CHECK(total_mass(net, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("seq_logprob from logits equals the direct computation") {
  const auto p = TabularPolicy::random(make_space(3, 3, 1), 1.0, 9);
  const TokenSeq y{2, 0, 1};
  const Tensor rows = p.response_logits(0, y);
  CHECK(seq_logprob_from_logits(rows, y) == seq_logprob(p, 0, y));
  double manual = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    manual += numerics::log_softmax_at(
        p.logits(0, std::span<const Token>(y).first(i)), y[i]);
  }
  CHECK(manual == doctest::Approx(seq_logprob(p, 0, y)).epsilon(1e-14));
}

TEST_CASE("forward passes are counted per call") {
  auto p = TabularPolicy::random(make_space(3, 2, 1), 1.0, 1);
  p.reset_forward_passes();
  (void)p.response_logits(0, TokenSeq{1, 2});
  (void)p.logits(0, TokenSeq{});
  CHECK(p.forward_passes() == 2);
}

TEST_CASE("ancestral sampling matches sequence probabilities") {
  const auto p = TabularPolicy::random(make_space(2, 2, 1), 1.0, 2);
  Rng rng(11);
  std::map<TokenSeq, int> counts;
  const int n = 40000;
  for (int i = 0; i < n; ++i) counts[sample(p, 0, rng, 2).tokens] += 1;
  for (const auto& y : enumerate_responses(p.space())) {
    const double expected = std::exp(seq_logprob(p, 0, y));
    CHECK(counts[y] / double(n) == doctest::Approx(expected).epsilon(0.02));
  }
  CHECK_THROWS_AS(sample(p, 0, rng, 2, 0.0), ArgumentError);
}

TEST_CASE("sampling stops at EOS") {
  TabularPolicy p(make_space(3, 3, 1, true));
  const std::vector<double> eos_only{-50.0, -50.0, 50.0};
  p.set_logits(0, TokenSeq{}, eos_only);
  Rng rng(0);
  CHECK(sample(p, 0, rng, 3).tokens == TokenSeq{2});
}

TEST_CASE("merging and copying parameters") {
  const auto a = TabularPolicy::random(make_space(2, 2, 1), 1.0, 1);
  const auto b = TabularPolicy::random(make_space(2, 2, 1), 1.0, 2);
  const auto m = merge_parameters(a, b, 0.25);
  const auto& mt = static_cast<const TabularPolicy&>(*m).table();
  for (std::size_t i = 0; i < mt.size(); ++i) {
    CHECK(mt[i] == doctest::Approx(0.25 * a.table()[i] + 0.75 * b.table()[i]));
  }
  auto c = b.clone();
  merge_into(*c, a, 1.0);
  CHECK(parameters_bit_equal(*c, a));
  copy_parameters(*c, b);
  CHECK(parameters_bit_equal(*c, b));
  const auto other = TabularPolicy::random(make_space(3, 2, 1), 1.0, 2);
  CHECK_THROWS_AS(check_compatible(a, other), ArgumentError);
}

TEST_CASE("policy checkpoints round trip for both parameterizations") {
  NeuralConfig nc;
  nc.dim = 5;
  nc.seed = 8;
  NeuralPolicy net(make_space(4, 2, 3, true), nc);
  const auto tab = TabularPolicy::random(make_space(3, 2, 2), 1.0, 3);
  for (const Policy* p : {static_cast<const Policy*>(&net),
                          static_cast<const Policy*>(&tab)}) {
    const auto back = policy_from_checkpoint(to_checkpoint(*p, {{"k", "v"}}));
    CHECK(back->architecture() == p->architecture());
    CHECK(back->space() == p->space());
    CHECK(parameters_bit_equal(*back, *p));
  }
  const auto path = std::filesystem::temp_directory_path() / "edpo_policy_test.ckpt";
  save_policy(path, tab);
  CHECK(parameters_bit_equal(*load_policy(path), tab));
  std::filesystem::remove(path);
}

TEST_CASE("neural policy respects the parameter budget") {
  NeuralConfig nc;
  nc.dim = 512;
  nc.layers = 4;
  CHECK_THROWS_AS(NeuralPolicy(make_space(16, 4, 4), nc), ArgumentError);
}

TEST_CASE("taped response logits match the untaped forward pass") {
  NeuralConfig nc;
  nc.dim = 6;
  nc.layers = 2;
  nc.seed = 1;
  NeuralPolicy net(make_space(4, 3, 2, true), nc);
  const TokenSeq y{1, 0, 3};
  Tape tape;
  const auto params = net.bind(tape);
  const auto rows = net.response_logits(tape, params, 1, y);
  const Tensor plain = net.response_logits(1, y);
  REQUIRE(rows.size() == plain.rows());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < plain.cols(); ++c) {
      CHECK(rows[r].value()[c] == doctest::Approx(plain.at(r, c)).epsilon(1e-14));
    }
  }
  CHECK(seq_logprob(tape, rows, y).item() ==
        doctest::Approx(seq_logprob_from_logits(plain, y)).epsilon(1e-14));
}


TEST_CASE("uniform policy gives n log(1/|V|)") {
  TabularPolicy p(make_space(2, 3, 1));
  CHECK(seq_logprob(p, 0, TokenSeq{0, 1, 1}) ==
        doctest::Approx(-3.0 * std::log(2.0)).epsilon(1e-14));
  for (double v : p.logits(0, TokenSeq{1})) CHECK(v == 0.0);
}

TEST_CASE("neural forward pass is deterministic") {
  NeuralConfig nc;
  nc.seed = 5;
  NeuralPolicy net(make_space(4, 3, 2, true), nc);
  CHECK(net.logits(1, TokenSeq{0, 1}) == net.logits(1, TokenSeq{0, 1}));
  CHECK_THROWS_AS(net.logits(2, TokenSeq{}), ArgumentError);
}

TEST_CASE("degenerate policy samples its dominant token") {
  TabularPolicy p(make_space(4, 1, 1));
  p.set_logits(0, TokenSeq{}, std::vector<double>{-30.0, 30.0, -30.0, -30.0});
  Rng rng(3);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += sample(p, 0, rng, 1).tokens[0] == 1;
  CHECK(hits >= 9990);
}

TEST_CASE("sampling is reproducible under a fixed seed") {
  const auto p = TabularPolicy::random(make_space(4, 3, 2), 1.0, 6);
  Rng a(42), b(42);
  for (int i = 0; i < 50; ++i) CHECK(sample(p, 1, a, 3) == sample(p, 1, b, 3));
}

TEST_CASE("high temperature sampling approaches uniform") {
  TabularPolicy p(make_space(4, 1, 1));
  p.set_logits(0, TokenSeq{}, std::vector<double>{2.0, -1.0, 0.5, 0.0});
  Rng rng(9);
  std::array<int, 4> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) counts[sample(p, 0, rng, 1, 1e6).tokens[0]] += 1;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  CHECK(chi2 < 11.34);  // 0.99 quantile with 3 degrees of freedom
}

TEST_CASE("scalar merge example") {
  auto a = single_token_scalar(1.0);
  auto b = single_token_scalar(0.0);
  CHECK(static_cast<const TabularPolicy&>(*merge_parameters(a, b, 0.6)).table()[0] ==
        doctest::Approx(0.6));
  CHECK(parameters_bit_equal(*merge_parameters(a, b, 1.0), a));
  CHECK(parameters_bit_equal(*merge_parameters(a, b, 0.0), b));
}

}  // TEST_SUITE
