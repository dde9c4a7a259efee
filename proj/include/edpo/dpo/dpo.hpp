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

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "edpo/numerics/autodiff.hpp"
#include "edpo/policy/policy.hpp"

namespace edpo::dpo {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
using policy::Policy;
using policy::SequenceSpace;
using policy::Token;
using policy::TokenSeq;

// (x, y^w, y^l) with the probability `label` that y^w is preferred.
struct PreferenceTriplet {
  std::size_t prompt = 0;
  TokenSeq chosen;
  TokenSeq rejected;
  double label = 1.0;

  // Throws ArgumentError on invalid responses, y^w == y^l, or a label
  // outside [0, 1].
  void validate(const SequenceSpace& space) const;
  PreferenceTriplet swapped() const;

  bool operator==(const PreferenceTriplet&) const = default;
};

// The DPO policy viewed as a binary classifier sigma(beta * (z - gamma)).
struct ClassifierView {
  double z = 0.0;
  double gamma = 0.0;
  double beta = 0.0;

  double margin() const { return beta * (z - gamma); }
};

// log pi_theta(y^w|x) - log pi_theta(y^l|x).
double logit_z(const Policy& policy, const PreferenceTriplet& triplet);
// The same log-ratio under the reference policy.
double margin_gamma(const Policy& reference, const PreferenceTriplet& triplet);

ClassifierView classifier_view(const Policy& policy, const Policy& reference,
                               const PreferenceTriplet& triplet, double beta);

// sigma(beta * (z - gamma)). Throws ArgumentError for beta <= 0.
double preference_prob(double z, double gamma, double beta);

// -log P for a hard label; the label-weighted cross-entropy otherwise.
double dpo_loss_value(double z, double gamma, double beta, double label = 1.0);
// d(dpo_loss_value)/dz.
double dpo_loss_dz(double z, double gamma, double beta, double label = 1.0);

// Differentiable loss for a recorded logit z; gamma and beta are constants.
Var dpo_loss(Tape& tape, Var z, double gamma, double beta, double label = 1.0);

// Differentiable loss through `policy` (bound as `params` on `tape`). The
// reference enters only through gamma, so no gradient reaches it.
Var dpo_loss(Tape& tape, std::span<const Var> params, const Policy& policy,
             const Policy& reference, const PreferenceTriplet& triplet,
             double beta);

// beta * (z - gamma). The prompt-only normalizer of the implicit reward
// cancels in the difference and is never formed.
double implicit_reward_margin(const PreferenceTriplet& triplet,
                              const Policy& policy, const Policy& reference,
                              double beta);

// Per-position logits of one response under the policy and the reference.
// The epsilon estimators consume these instead of running the models again.
struct ResponseLogits {
  TokenSeq tokens;
  Tensor policy;
  Tensor reference;

  bool complete() const;
};

struct TripletLogits {
  ResponseLogits chosen;
  ResponseLogits rejected;
};

// Runs both models on both responses (four forward passes).
TripletLogits collect_logits(const Policy& policy, const Policy& reference,
                             const PreferenceTriplet& triplet);

// Reference logits and log-likelihoods computed once per dataset instance.
// Invalidate after the reference parameters change.
class ReferenceCache {
 public:
  struct Entry {
    Tensor chosen_logits;
    Tensor rejected_logits;
    double chosen_logprob = 0.0;
    double rejected_logprob = 0.0;

    double gamma() const { return chosen_logprob - rejected_logprob; }
  };

  explicit ReferenceCache(const Policy& reference, std::size_t capacity = 0);

  const Entry& get(std::size_t key, const PreferenceTriplet& triplet);
  bool contains(std::size_t key) const;
  void invalidate();
  void rebind(const Policy& reference);
  const Policy& reference() const { return *reference_; }

 private:
  const Policy* reference_;
  std::vector<std::optional<Entry>> entries_;
};

}  // namespace edpo::dpo
