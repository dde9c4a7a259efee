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

#include "edpo/dpo/dpo.hpp"

#include <cmath>

#include "edpo/errors.hpp"
#include "edpo/numerics/math.hpp"

namespace edpo::dpo {
namespace {

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ArgumentError("beta must be positive and finite");
  }
}

void check_label(double label) {
  if (!(label >= 0.0 && label <= 1.0)) {
    throw ArgumentError("preference label must lie in [0, 1]");
  }
}

}  // namespace

void PreferenceTriplet::validate(const SequenceSpace& space) const {
  space.check_prompt(prompt);
  space.check_response(chosen);
  space.check_response(rejected);
  if (chosen == rejected) {
    throw ArgumentError("chosen and rejected responses are identical");
  }
  check_label(label);
}

PreferenceTriplet PreferenceTriplet::swapped() const {
  return {prompt, rejected, chosen, 1.0 - label};
}

double logit_z(const Policy& policy, const PreferenceTriplet& triplet) {
  return policy::seq_logprob(policy, triplet.prompt, triplet.chosen) -
         policy::seq_logprob(policy, triplet.prompt, triplet.rejected);
}

double margin_gamma(const Policy& reference, const PreferenceTriplet& triplet) {
  return logit_z(reference, triplet);
}

ClassifierView classifier_view(const Policy& policy, const Policy& reference,
                               const PreferenceTriplet& triplet, double beta) {
  check_beta(beta);
  return {logit_z(policy, triplet), margin_gamma(reference, triplet), beta};
}

double preference_prob(double z, double gamma, double beta) {
  check_beta(beta);
  return numerics::sigmoid(beta * (z - gamma));
}

double dpo_loss_value(double z, double gamma, double beta, double label) {
  check_beta(beta);
  check_label(label);
  const double m = beta * (z - gamma);
  if (label == 1.0) return -numerics::logsigmoid(m);
  return label * -numerics::logsigmoid(m) +
         (1.0 - label) * -numerics::logsigmoid(-m);
}

double dpo_loss_dz(double z, double gamma, double beta, double label) {
  check_beta(beta);
  check_label(label);
  const double m = beta * (z - gamma);
  return beta * (-label * numerics::sigmoid(-m) +
                 (1.0 - label) * numerics::sigmoid(m));
}

Var dpo_loss(Tape& tape, Var z, double gamma, double beta, double label) {
  check_beta(beta);
  check_label(label);
  const Var m = tape.scale(tape.add_scalar(z, -gamma), beta);
  if (label == 1.0) return tape.scale(tape.logsigmoid(m), -1.0);
  const Var pos = tape.scale(tape.logsigmoid(m), -label);
  const Var neg = tape.scale(tape.logsigmoid(tape.scale(m, -1.0)), -(1.0 - label));
  return tape.add(pos, neg);
}

Var dpo_loss(Tape& tape, std::span<const Var> params, const Policy& policy,
             const Policy& reference, const PreferenceTriplet& triplet,
             double beta) {
  const auto rows_w =
      policy.response_logits(tape, params, triplet.prompt, triplet.chosen);
  const auto rows_l =
      policy.response_logits(tape, params, triplet.prompt, triplet.rejected);
  const Var lp_w = policy::seq_logprob(tape, rows_w, triplet.chosen);
  const Var lp_l = policy::seq_logprob(tape, rows_l, triplet.rejected);
  const double gamma = margin_gamma(reference, triplet);
  return dpo_loss(tape, tape.sub(lp_w, lp_l), gamma, beta, triplet.label);
}

double implicit_reward_margin(const PreferenceTriplet& triplet,
                              const Policy& policy, const Policy& reference,
                              double beta) {
  return classifier_view(policy, reference, triplet, beta).margin();
}

bool ResponseLogits::complete() const {
  return !tokens.empty() && policy.rank() == 2 && reference.rank() == 2 &&
         policy.rows() == tokens.size() && reference.same_shape(policy);
}

TripletLogits collect_logits(const Policy& policy, const Policy& reference,
                             const PreferenceTriplet& triplet) {
  TripletLogits out;
  out.chosen.tokens = triplet.chosen;
  out.chosen.policy = policy.response_logits(triplet.prompt, triplet.chosen);
  out.chosen.reference =
      reference.response_logits(triplet.prompt, triplet.chosen);
  out.rejected.tokens = triplet.rejected;
  out.rejected.policy =
      policy.response_logits(triplet.prompt, triplet.rejected);
  out.rejected.reference =
      reference.response_logits(triplet.prompt, triplet.rejected);
  return out;
}

ReferenceCache::ReferenceCache(const Policy& reference, std::size_t capacity)
    : reference_(&reference), entries_(capacity) {}

const ReferenceCache::Entry& ReferenceCache::get(
    std::size_t key, const PreferenceTriplet& triplet) {
  if (key >= entries_.size()) entries_.resize(key + 1);
  auto& slot = entries_[key];
  if (!slot) {
    Entry e;
    e.chosen_logits = reference_->response_logits(triplet.prompt, triplet.chosen);
    e.rejected_logits =
        reference_->response_logits(triplet.prompt, triplet.rejected);
    e.chosen_logprob =
        policy::seq_logprob_from_logits(e.chosen_logits, triplet.chosen);
    e.rejected_logprob =
        policy::seq_logprob_from_logits(e.rejected_logits, triplet.rejected);
    slot = std::move(e);
  }
  return *slot;
}

bool ReferenceCache::contains(std::size_t key) const {
  return key < entries_.size() && entries_[key].has_value();
}

void ReferenceCache::invalidate() {
  for (auto& e : entries_) e.reset();
}

void ReferenceCache::rebind(const Policy& reference) {
  reference_ = &reference;
  invalidate();
}

}  // namespace edpo::dpo
