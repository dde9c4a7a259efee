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

#include "edpo/policy/tabular.hpp"

#include <random>

#include "edpo/errors.hpp"

namespace edpo::policy {
namespace {

constexpr std::size_t kMaxTableEntries = std::size_t{1} << 25;

}  // namespace

TabularPolicy::TabularPolicy(SequenceSpace space) : Policy(std::move(space)) {
  const std::size_t v = this->space().vocab.size;
  const std::size_t len = this->space().max_len;
  length_offsets_.assign(len + 1, 0);
  std::size_t power = 1;
  for (std::size_t i = 0; i < len; ++i) {
    length_offsets_[i + 1] = length_offsets_[i] + power;
    if (power > kMaxTableEntries / v) {
      throw ArgumentError("tabular policy too large for this space");
    }
    power *= v;
  }
  prefixes_per_prompt_ = length_offsets_[len];
  const std::size_t rows = this->space().num_prompts * prefixes_per_prompt_;
  if (rows > kMaxTableEntries / v) {
    throw ArgumentError("tabular policy too large for this space");
  }
  add_parameter("logits", Tensor({rows, v}));
}

TabularPolicy TabularPolicy::random(SequenceSpace space, double scale,
                                    std::uint64_t seed) {
  TabularPolicy policy(std::move(space));
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& x : policy.table().data()) x = normal(rng);
  return policy;
}

std::size_t TabularPolicy::row_index(std::size_t prompt,
                                     std::span<const Token> prefix) const {
  space().check_prompt(prompt);
  if (prefix.size() >= space().max_len) {
    throw ArgumentError("prefix length must be below max_len");
  }
  const std::size_t v = space().vocab.size;
  std::size_t code = 0;
  for (Token t : prefix) {
    if (t >= v) throw ArgumentError("token outside vocabulary");
    code = code * v + t;
  }
  return prompt * prefixes_per_prompt_ + length_offsets_[prefix.size()] + code;
}

void TabularPolicy::set_logits(std::size_t prompt,
                               std::span<const Token> prefix,
                               std::span<const double> values) {
  if (values.size() != vocab_size()) {
    throw ArgumentError("logit vector length must equal |V|");
  }
  auto row = table().row(row_index(prompt, prefix));
  std::copy(values.begin(), values.end(), row.begin());
}

std::unique_ptr<Policy> TabularPolicy::clone() const {
  return std::make_unique<TabularPolicy>(*this);
}

nlohmann::json TabularPolicy::architecture() const {
  return {{"kind", "tabular"}, {"space", space_to_json(space())}};
}

Tensor TabularPolicy::compute_logits(std::size_t prompt,
                                     std::span<const Token> tokens) const {
  const std::size_t v = vocab_size();
  Tensor out({tokens.size() + 1, v});
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    auto src = table().row(row_index(prompt, tokens.first(i)));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<Var> TabularPolicy::compute_logits(
    Tape& tape, std::span<const Var> params, std::size_t prompt,
    std::span<const Token> tokens) const {
  std::vector<Var> rows;
  rows.reserve(tokens.size() + 1);
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    rows.push_back(tape.row(params[0], row_index(prompt, tokens.first(i))));
  }
  return rows;
}

}  // namespace edpo::policy
