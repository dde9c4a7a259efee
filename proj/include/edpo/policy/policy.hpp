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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "edpo/numerics/autodiff.hpp"
#include "edpo/numerics/checkpoint.hpp"
#include "edpo/numerics/tensor.hpp"
#include "edpo/policy/sequence.hpp"
#include "json.hpp"

namespace edpo::policy {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
using Rng = std::mt19937_64;

// Autoregressive policy over a SequenceSpace. Subclasses define the
// parameterization of the per-position logits f(x, y_{1:i-1}); everything
// else (log-likelihoods, sampling, merging, checkpoints) works on this
// interface.
//
// Every call to logits() or response_logits() counts as one forward pass.
class Policy {
 public:
  explicit Policy(SequenceSpace space);
  Policy(const Policy& other);
  Policy& operator=(const Policy&) = delete;
  virtual ~Policy() = default;

  const SequenceSpace& space() const { return space_; }
  std::size_t vocab_size() const { return space_.vocab.size; }

  // Logits for the next token after `prefix` (|prefix| < max_len).
  std::vector<double> logits(std::size_t prompt,
                             std::span<const Token> prefix) const;

  // Row i holds the logits conditioned on tokens[0..i).
  Tensor response_logits(std::size_t prompt,
                         std::span<const Token> tokens) const;

  // Differentiable version; `params` comes from bind() on the same tape.
  std::vector<Var> response_logits(Tape& tape, std::span<const Var> params,
                                   std::size_t prompt,
                                   std::span<const Token> tokens) const;

  // Records every parameter tensor as a tape leaf. Gradients flow into the
  // parameter grad buffers.
  std::vector<Var> bind(Tape& tape);

  std::span<Tensor> parameters() { return params_; }
  std::span<const Tensor> parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::vector<Tensor*> parameter_ptrs();
  std::size_t parameter_count() const;
  void zero_grad();

  virtual std::unique_ptr<Policy> clone() const = 0;
  virtual nlohmann::json architecture() const = 0;

  std::uint64_t forward_passes() const { return forward_passes_.load(); }
  void reset_forward_passes() { forward_passes_.store(0); }

 protected:
  void add_parameter(std::string name, Tensor tensor);

  virtual Tensor compute_logits(std::size_t prompt,
                                std::span<const Token> tokens) const = 0;
  virtual std::vector<Var> compute_logits(Tape& tape,
                                          std::span<const Var> params,
                                          std::size_t prompt,
                                          std::span<const Token> tokens) const = 0;

 private:
  void check_prefix_input(std::size_t prompt, std::span<const Token> tokens,
                          std::size_t max_positions) const;

  SequenceSpace space_;
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
  mutable std::atomic<std::uint64_t> forward_passes_{0};
};

// log pi(tokens | prompt) from precomputed per-position logits.
double seq_logprob_from_logits(const Tensor& logits,
                               std::span<const Token> tokens);

// Sum over positions of log_softmax(logits(x, y_{1:i-1}))[y_i].
double seq_logprob(const Policy& policy, std::size_t prompt,
                   std::span<const Token> tokens);

// Differentiable sequence log-likelihood from per-position logit rows.
Var seq_logprob(Tape& tape, std::span<const Var> logit_rows,
                std::span<const Token> tokens);

// Ancestral sampling from softmax(logits / temperature). Stops at EOS or
// after max_len tokens. Throws ArgumentError for temperature <= 0.
Sequence sample(const Policy& policy, std::size_t prompt, Rng& rng,
                std::size_t max_len, double temperature = 1.0);

// Draws an index from unnormalized log-weights.
std::size_t sample_categorical(std::span<const double> logits, Rng& rng);

std::unique_ptr<Policy> clone_parameters(const Policy& policy);

// Copy of `a` with theta = alpha * theta_a + (1 - alpha) * theta_b.
std::unique_ptr<Policy> merge_parameters(const Policy& a, const Policy& b,
                                         double alpha);

// target <- alpha * source + (1 - alpha) * target, in place.
void merge_into(Policy& target, const Policy& source, double alpha);

void copy_parameters(Policy& target, const Policy& source);

// Throws ArgumentError unless both policies share architecture and shapes.
void check_compatible(const Policy& a, const Policy& b);

bool parameters_bit_equal(const Policy& a, const Policy& b);

// Checkpoint container with an "arch" metadata block.
numerics::Checkpoint to_checkpoint(
    const Policy& policy, const std::map<std::string, std::string>& meta = {});
std::unique_ptr<Policy> policy_from_checkpoint(
    const numerics::Checkpoint& checkpoint);
void save_policy(const std::filesystem::path& path, const Policy& policy,
                 const std::map<std::string, std::string>& meta = {});
std::unique_ptr<Policy> load_policy(const std::filesystem::path& path);

nlohmann::json space_to_json(const SequenceSpace& space);
SequenceSpace space_from_json(const nlohmann::json& j);

}  // namespace edpo::policy
