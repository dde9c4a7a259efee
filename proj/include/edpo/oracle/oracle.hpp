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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edpo/dpo/dpo.hpp"
#include "edpo/policy/policy.hpp"
#include "edpo/policy/tabular.hpp"
#include "json.hpp"

namespace edpo::oracle {

using dpo::PreferenceTriplet;
using policy::Policy;
using policy::Rng;
using policy::SequenceSpace;
using policy::TabularPolicy;
using policy::Token;
using policy::TokenSeq;

// Enumerated responses of a space with an index lookup.
class ResponseIndex {
 public:
  explicit ResponseIndex(const SequenceSpace& space);

  const SequenceSpace& space() const { return space_; }
  const std::vector<TokenSeq>& responses() const { return responses_; }
  std::size_t size() const { return responses_.size(); }
  // Throws ArgumentError for a sequence outside the space.
  std::size_t index_of(std::span<const Token> tokens) const;

 private:
  SequenceSpace space_;
  std::vector<TokenSeq> responses_;
  std::map<TokenSeq, std::size_t> lookup_;
};

// Ground-truth reward r*(x, y) tabulated over every prompt and response.
class RewardSpec {
 public:
  // table[x][j] is the reward of response j (enumeration order) for prompt x.
  static RewardSpec tabulated(const SequenceSpace& space,
                              std::vector<std::vector<double>> table);
  // r*(x, y) = sum_i token_rewards[x][i][y_i]; shape [X][max_len][V].
  static RewardSpec additive(
      const SequenceSpace& space,
      const std::vector<std::vector<std::vector<double>>>& token_rewards);
  // Additive reward with independent N(0, scale^2) entries.
  static RewardSpec random_additive(const SequenceSpace& space, double scale,
                                    std::uint64_t seed);

  const SequenceSpace& space() const { return index_->space(); }
  const ResponseIndex& index() const { return *index_; }
  double reward(std::size_t prompt, std::span<const Token> tokens) const;
  double reward_at(std::size_t prompt, std::size_t response) const {
    return table_[prompt][response];
  }
  const std::vector<double>& row(std::size_t prompt) const {
    return table_[prompt];
  }

 private:
  RewardSpec(std::shared_ptr<const ResponseIndex> index,
             std::vector<std::vector<double>> table);

  std::shared_ptr<const ResponseIndex> index_;
  std::vector<std::vector<double>> table_;
};

// Explicit distribution pi(y|x) over the enumerated responses, stored as
// log-probabilities together with the log normalizer of the unnormalized
// weights that produced them.
class ExactPolicy {
 public:
  ExactPolicy(std::shared_ptr<const ResponseIndex> index,
              std::vector<std::vector<double>> log_probs,
              std::vector<double> log_normalizer);

  const SequenceSpace& space() const { return index_->space(); }
  const ResponseIndex& index() const { return *index_; }
  std::shared_ptr<const ResponseIndex> shared_index() const { return index_; }
  std::size_t num_prompts() const { return log_probs_.size(); }

  const std::vector<double>& log_probs(std::size_t prompt) const {
    return log_probs_[prompt];
  }
  double log_prob(std::size_t prompt, std::span<const Token> tokens) const;
  double prob_at(std::size_t prompt, std::size_t response) const;
  std::vector<double> probs(std::size_t prompt) const;
  double log_normalizer(std::size_t prompt) const {
    return log_normalizer_[prompt];
  }

  TokenSeq sample(std::size_t prompt, Rng& rng) const;

 private:
  std::shared_ptr<const ResponseIndex> index_;
  std::vector<std::vector<double>> log_probs_;
  std::vector<double> log_normalizer_;
};

// Enumerates pi(y|x) = prod_i pi(y_i | x, y_{<i}) for every response.
ExactPolicy exact_policy_of(const Policy& policy);

// pi*_beta = pi_ref * exp(r* / beta) / Z. Throws ArgumentError for beta <= 0.
ExactPolicy closed_form_policy(const RewardSpec& reward,
                               const ExactPolicy& reference, double beta);
ExactPolicy closed_form_policy(const RewardSpec& reward,
                               const Policy& reference, double beta);

// The optimal policy at beta / lambda from the one at beta:
// pi*_beta^lambda * pi_ref^(1 - lambda) / Z. Throws ArgumentError for
// lambda <= 0 or when exactly one of the two assigns zero probability.
ExactPolicy exact_rescaled_policy(const ExactPolicy& optimal,
                                  const ExactPolicy& reference, double lambda);

// Tabular policy whose autoregressive conditionals reproduce `exact`.
// Prefixes with zero mass get uniform rows.
TabularPolicy to_tabular(const ExactPolicy& exact);

// Mean over prompts of 0.5 * sum_y |p(y|x) - q(y|x)|.
double total_variation(const ExactPolicy& p, const ExactPolicy& q);

enum class LabelMode { kHard, kSoft, kSampled };

// Throws ConfigError for an unknown name.
LabelMode label_mode_from_string(const std::string& name);
std::string to_string(LabelMode mode);

using ResponseSampler = std::function<TokenSeq(std::size_t prompt, Rng& rng)>;

ResponseSampler uniform_sampler(const SequenceSpace& space);
ResponseSampler policy_sampler(const Policy& policy);
ResponseSampler exact_sampler(const ExactPolicy& policy);

struct DatasetRecord {
  PreferenceTriplet triplet;
  double r_chosen = 0.0;
  double r_rejected = 0.0;

  bool operator==(const DatasetRecord&) const = default;
};

struct Dataset {
  SequenceSpace space;
  nlohmann::json generator = nlohmann::json::object();
  std::vector<DatasetRecord> records;

  std::size_t size() const { return records.size(); }
  std::vector<PreferenceTriplet> triplets() const;
  bool operator==(const Dataset&) const = default;
};

struct SampleOptions {
  LabelMode mode = LabelMode::kHard;
  std::size_t max_retries = 1000;
};

// Draws n_pairs prompts uniformly from `prompts` and two responses per
// prompt. Equal responses, and equal rewards in hard mode, are redrawn;
// exhausting the retries throws RuntimeFailure.
Dataset sample_preferences(const RewardSpec& reward,
                           std::span<const std::size_t> prompts,
                           const ResponseSampler& sampler, std::size_t n_pairs,
                           const SampleOptions& options, Rng& rng);

// Adds every ordered pair of distinct responses per prompt with soft label
// sigma(r(a) - r(b)); both orientations appear.
Dataset all_pairs_soft(const RewardSpec& reward);

void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace edpo::oracle
