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

struct NeuralConfig {
  std::size_t dim = 16;
  std::size_t layers = 1;
  double init_scale = 0.3;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMaxNeuralParameters = 50000;

// Tiny causal model. Position t reads the prompt embedding, the embedding of
// the previous token (a BOS slot at t = 0) and a position embedding; each
// mixing layer adds tanh(W * causal_mean(h_0..h_t) + U * h_t + b) to h_t;
// an affine head maps h_t to |V| logits.
class NeuralPolicy : public Policy {
 public:
  NeuralPolicy(SequenceSpace space, NeuralConfig config);

  const NeuralConfig& config() const { return config_; }

  std::unique_ptr<Policy> clone() const override;
  nlohmann::json architecture() const override;

 protected:
  Tensor compute_logits(std::size_t prompt,
                        std::span<const Token> tokens) const override;
  std::vector<Var> compute_logits(Tape& tape, std::span<const Var> params,
                                  std::size_t prompt,
                                  std::span<const Token> tokens) const override;

 private:
  NeuralConfig config_;
};

}  // namespace edpo::policy
