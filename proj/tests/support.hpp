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

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "edpo/dpo/dpo.hpp"
#include "edpo/oracle/oracle.hpp"
#include "edpo/policy/neural.hpp"
#include "edpo/policy/tabular.hpp"

namespace edpo::testing {

inline policy::SequenceSpace make_space(std::size_t vocab, std::size_t max_len,
                                        std::size_t prompts, bool eos = false) {
  policy::SequenceSpace s;
  s.vocab.size = vocab;
  if (eos) s.vocab.eos = static_cast<policy::Token>(vocab - 1);
  s.max_len = max_len;
  s.num_prompts = prompts;
  return s;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Two distinct responses drawn uniformly from the space.
inline dpo::PreferenceTriplet random_triplet(const policy::SequenceSpace& space,
                                             policy::Rng& rng,
                                             double label = 1.0) {
  const auto all = policy::enumerate_responses(space);
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  std::uniform_int_distribution<std::size_t> prompt(0, space.num_prompts - 1);
  dpo::PreferenceTriplet t;
  t.prompt = prompt(rng);
  const std::size_t a = pick(rng);
  std::size_t b = pick(rng);
  while (b == a) b = pick(rng);
  t.chosen = all[a];
  t.rejected = all[b];
  t.label = label;
  return t;
}

// Single-token tabular policy with the given logits for every prompt.
inline policy::TabularPolicy single_token(std::size_t prompts,
                                          const std::vector<double>& logits) {
  policy::TabularPolicy p(make_space(logits.size(), 1, prompts));
  for (std::size_t x = 0; x < prompts; ++x) p.set_logits(x, {}, logits);
  return p;
}

}  // namespace edpo::testing

#include <sstream>
#include <string>

#include "edpo/trainer/trainer.hpp"

namespace edpo::testing {

// Hard-label preferences drawn from the reference on a small tabular task.
inline oracle::Dataset small_dataset(const policy::Policy& reference,
                                     std::size_t n, std::uint64_t seed,
                                     oracle::LabelMode mode = oracle::LabelMode::kHard) {
  const auto reward = oracle::RewardSpec::random_additive(reference.space(), 1.0, seed);
  std::vector<std::size_t> prompts(reference.space().num_prompts);
  for (std::size_t x = 0; x < prompts.size(); ++x) prompts[x] = x;
  policy::Rng rng(seed + 1);
  return oracle::sample_preferences(reward, prompts, oracle::policy_sampler(reference),
                                    n, {mode, 1000}, rng);
}

// Metrics table with a fixed provenance block, so runs of different
// methods compare on the numeric columns alone.
inline std::string metrics_text(const trainer::TrainResult& result) {
  std::ostringstream out;
  trainer::write_metrics_csv(out, result.metrics, {"x", 0, "0"}, false);
  return out.str();
}

}  // namespace edpo::testing
