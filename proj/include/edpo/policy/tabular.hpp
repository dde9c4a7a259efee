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

#include "edpo/policy/policy.hpp"

namespace edpo::policy {

// Explicit logit table over every (prompt, prefix) with |prefix| < max_len.
// Row layout: prompt-major, then prefixes ordered by length and, within a
// length, by their base-|V| value.
class TabularPolicy : public Policy {
 public:
  // All-zero table (uniform policy).
  explicit TabularPolicy(SequenceSpace space);

  // Independent N(0, scale^2) logits.
  static TabularPolicy random(SequenceSpace space, double scale,
                              std::uint64_t seed);

  std::size_t prefixes_per_prompt() const { return prefixes_per_prompt_; }
  std::size_t row_index(std::size_t prompt,
                        std::span<const Token> prefix) const;

  Tensor& table() { return parameters()[0]; }
  const Tensor& table() const { return parameters()[0]; }
  void set_logits(std::size_t prompt, std::span<const Token> prefix,
                  std::span<const double> values);

  std::unique_ptr<Policy> clone() const override;
  nlohmann::json architecture() const override;

 protected:
  Tensor compute_logits(std::size_t prompt,
                        std::span<const Token> tokens) const override;
  std::vector<Var> compute_logits(Tape& tape, std::span<const Var> params,
                                  std::size_t prompt,
                                  std::span<const Token> tokens) const override;

 private:
  std::size_t prefixes_per_prompt_ = 0;
  std::vector<std::size_t> length_offsets_;
};

}  // namespace edpo::policy
