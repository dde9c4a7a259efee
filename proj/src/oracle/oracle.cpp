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

#include "edpo/oracle/oracle.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "edpo/errors.hpp"
#include "edpo/numerics/math.hpp"

namespace edpo::oracle {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ArgumentError("beta must be positive and finite");
  }
}

void check_same_index(const ExactPolicy& a, const ExactPolicy& b) {
  if (a.space() != b.space()) {
    throw ArgumentError("exact policies are defined over different spaces");
  }
}

// Normalizes unnormalized log-weights in place and returns log Z.
double normalize(std::vector<double>& logits) {
  const double lz = numerics::logsumexp(logits);
  if (!std::isfinite(lz)) throw ArgumentError("distribution has no finite mass");
  for (double& v : logits) v -= lz;
  return lz;
}

}  // namespace

ResponseIndex::ResponseIndex(const SequenceSpace& space)
    : space_(space), responses_(policy::enumerate_responses(space)) {
  for (std::size_t j = 0; j < responses_.size(); ++j) lookup_[responses_[j]] = j;
}

std::size_t ResponseIndex::index_of(std::span<const Token> tokens) const {
  auto it = lookup_.find(TokenSeq(tokens.begin(), tokens.end()));
  if (it == lookup_.end()) {
    throw ArgumentError("response " + policy::format_tokens(tokens) +
                        " is not in the sequence space");
  }
  return it->second;
}

RewardSpec::RewardSpec(std::shared_ptr<const ResponseIndex> index,
                       std::vector<std::vector<double>> table)
    : index_(std::move(index)), table_(std::move(table)) {
  if (table_.size() != index_->space().num_prompts) {
    throw ArgumentError("reward table needs one row per prompt");
  }
  for (const auto& row : table_) {
    if (row.size() != index_->size()) {
      throw ArgumentError("reward table row length must equal the number of responses");
    }
    for (double r : row) {
      if (!std::isfinite(r)) throw ArgumentError("rewards must be finite");
    }
  }
}

RewardSpec RewardSpec::tabulated(const SequenceSpace& space,
                                 std::vector<std::vector<double>> table) {
  space.validate();
  return RewardSpec(std::make_shared<const ResponseIndex>(space),
                    std::move(table));
}

RewardSpec RewardSpec::additive(
    const SequenceSpace& space,
    const std::vector<std::vector<std::vector<double>>>& token_rewards) {
  space.validate();
  auto index = std::make_shared<const ResponseIndex>(space);
  const std::size_t v = space.vocab.size;
  if (token_rewards.size() != space.num_prompts) {
    throw ArgumentError("additive reward needs one block per prompt");
  }
  std::vector<std::vector<double>> table(space.num_prompts);
  for (std::size_t x = 0; x < space.num_prompts; ++x) {
    const auto& block = token_rewards[x];
    if (block.size() != space.max_len) {
      throw ArgumentError("additive reward needs one row per position");
    }
    for (const auto& row : block) {
      if (row.size() != v) {
        throw ArgumentError("additive reward rows must have |V| entries");
      }
    }
    table[x].reserve(index->size());
    for (const TokenSeq& y : index->responses()) {
      double r = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) r += block[i][y[i]];
      table[x].push_back(r);
    }
  }
  return RewardSpec(std::move(index), std::move(table));
}

RewardSpec RewardSpec::random_additive(const SequenceSpace& space,
                                       double scale, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<std::vector<std::vector<double>>> blocks(
      space.num_prompts,
      std::vector<std::vector<double>>(space.max_len,
                                       std::vector<double>(space.vocab.size)));
  for (auto& block : blocks) {
    for (auto& row : block) {
      for (double& r : row) r = normal(rng);
    }
  }
  return additive(space, blocks);
}

double RewardSpec::reward(std::size_t prompt,
                          std::span<const Token> tokens) const {
  space().check_prompt(prompt);
  return table_[prompt][index_->index_of(tokens)];
}

ExactPolicy::ExactPolicy(std::shared_ptr<const ResponseIndex> index,
                         std::vector<std::vector<double>> log_probs,
                         std::vector<double> log_normalizer)
    : index_(std::move(index)),
      log_probs_(std::move(log_probs)),
      log_normalizer_(std::move(log_normalizer)) {
  if (log_probs_.size() != index_->space().num_prompts ||
      log_normalizer_.size() != log_probs_.size()) {
    throw ArgumentError("exact policy needs one row per prompt");
  }
  for (const auto& row : log_probs_) {
    if (row.size() != index_->size()) {
      throw ArgumentError("exact policy row length must equal the number of responses");
    }
  }
}

double ExactPolicy::log_prob(std::size_t prompt,
                             std::span<const Token> tokens) const {
  space().check_prompt(prompt);
  return log_probs_[prompt][index_->index_of(tokens)];
}

double ExactPolicy::prob_at(std::size_t prompt, std::size_t response) const {
  return std::exp(log_probs_[prompt][response]);
}

std::vector<double> ExactPolicy::probs(std::size_t prompt) const {
  std::vector<double> out(log_probs_[prompt].size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = prob_at(prompt, j);
  return out;
}

TokenSeq ExactPolicy::sample(std::size_t prompt, Rng& rng) const {
  space().check_prompt(prompt);
  return index_->responses()[policy::sample_categorical(log_probs_[prompt], rng)];
}

ExactPolicy exact_policy_of(const Policy& policy) {
  auto index = std::make_shared<const ResponseIndex>(policy.space());
  const std::size_t n_prompts = policy.space().num_prompts;
  std::vector<std::vector<double>> log_probs(n_prompts);
  for (std::size_t x = 0; x < n_prompts; ++x) {
    log_probs[x].reserve(index->size());
    for (const TokenSeq& y : index->responses()) {
      log_probs[x].push_back(policy::seq_logprob(policy, x, y));
    }
  }
  return ExactPolicy(std::move(index), std::move(log_probs),
                     std::vector<double>(n_prompts, 0.0));
}

ExactPolicy closed_form_policy(const RewardSpec& reward,
                               const ExactPolicy& reference, double beta) {
  check_beta(beta);
  if (reward.space() != reference.space()) {
    throw ArgumentError("reward and reference are defined over different spaces");
  }
  const std::size_t n_prompts = reference.num_prompts();
  std::vector<std::vector<double>> log_probs(n_prompts);
  std::vector<double> log_z(n_prompts);
  for (std::size_t x = 0; x < n_prompts; ++x) {
    const auto& ref = reference.log_probs(x);
    auto& row = log_probs[x];
    row.resize(ref.size());
    for (std::size_t j = 0; j < ref.size(); ++j) {
      row[j] = ref[j] + reward.reward_at(x, j) / beta;
    }
    log_z[x] = normalize(row);
  }
  return ExactPolicy(reference.shared_index(), std::move(log_probs),
                     std::move(log_z));
}

ExactPolicy closed_form_policy(const RewardSpec& reward,
                               const Policy& reference, double beta) {
  check_beta(beta);
  return closed_form_policy(reward, exact_policy_of(reference), beta);
}

ExactPolicy exact_rescaled_policy(const ExactPolicy& optimal,
                                  const ExactPolicy& reference, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ArgumentError("lambda must be positive");
  }
  check_same_index(optimal, reference);
  const std::size_t n_prompts = optimal.num_prompts();
  std::vector<std::vector<double>> log_probs(n_prompts);
  std::vector<double> log_z(n_prompts);
  for (std::size_t x = 0; x < n_prompts; ++x) {
    const auto& a = optimal.log_probs(x);
    const auto& b = reference.log_probs(x);
    auto& row = log_probs[x];
    row.resize(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      const bool a_zero = a[j] == kNegInf;
      const bool b_zero = b[j] == kNegInf;
      if (a_zero != b_zero) {
        throw ArgumentError("optimal and reference policies have different supports");
      }
      row[j] = a_zero ? kNegInf : lambda * a[j] + (1.0 - lambda) * b[j];
    }
    log_z[x] = normalize(row);
  }
  return ExactPolicy(optimal.shared_index(), std::move(log_probs),
                     std::move(log_z));
}

TabularPolicy to_tabular(const ExactPolicy& exact) {
  TabularPolicy out(exact.space());
  const std::size_t v = exact.space().vocab.size;
  const std::size_t rows = out.table().rows();
  std::vector<double> mass(rows * v, kNegInf);
  const auto& responses = exact.index().responses();
  for (std::size_t x = 0; x < exact.num_prompts(); ++x) {
    const auto& lp = exact.log_probs(x);
    for (std::size_t j = 0; j < responses.size(); ++j) {
      const TokenSeq& y = responses[j];
      for (std::size_t i = 0; i < y.size(); ++i) {
        const std::size_t r =
            out.row_index(x, std::span<const Token>(y).first(i));
        double& cell = mass[r * v + y[i]];
        cell = log_add(cell, lp[j]);
      }
    }
  }
  auto& table = out.table();
  for (std::size_t r = 0; r < rows; ++r) {
    bool reached = false;
    for (std::size_t k = 0; k < v; ++k) reached |= mass[r * v + k] != kNegInf;
    if (!reached) continue;
    for (std::size_t k = 0; k < v; ++k) table.at(r, k) = mass[r * v + k];
  }
  return out;
}

double total_variation(const ExactPolicy& p, const ExactPolicy& q) {
  check_same_index(p, q);
  double total = 0.0;
  for (std::size_t x = 0; x < p.num_prompts(); ++x) {
    double tv = 0.0;
    for (std::size_t j = 0; j < p.index().size(); ++j) {
      tv += std::abs(p.prob_at(x, j) - q.prob_at(x, j));
    }
    total += 0.5 * tv;
  }
  return total / static_cast<double>(p.num_prompts());
}

LabelMode label_mode_from_string(const std::string& name) {
  if (name == "hard") return LabelMode::kHard;
  if (name == "soft") return LabelMode::kSoft;
  if (name == "sampled") return LabelMode::kSampled;
  throw ConfigError("unknown label mode '" + name + "'");
}

std::string to_string(LabelMode mode) {
  switch (mode) {
    case LabelMode::kHard:
      return "hard";
    case LabelMode::kSoft:
      return "soft";
    case LabelMode::kSampled:
      return "sampled";
  }
  return "hard";
}

ResponseSampler uniform_sampler(const SequenceSpace& space) {
  auto index = std::make_shared<const ResponseIndex>(space);
  return [index](std::size_t, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, index->size() - 1);
    return index->responses()[pick(rng)];
  };
}

ResponseSampler policy_sampler(const Policy& policy) {
  return [&policy](std::size_t prompt, Rng& rng) {
    return policy::sample(policy, prompt, rng, policy.space().max_len).tokens;
  };
}

ResponseSampler exact_sampler(const ExactPolicy& policy) {
  return [&policy](std::size_t prompt, Rng& rng) {
    return policy.sample(prompt, rng);
  };
}

std::vector<PreferenceTriplet> Dataset::triplets() const {
  std::vector<PreferenceTriplet> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.triplet);
  return out;
}

Dataset sample_preferences(const RewardSpec& reward,
                           std::span<const std::size_t> prompts,
                           const ResponseSampler& sampler, std::size_t n_pairs,
                           const SampleOptions& options, Rng& rng) {
  if (n_pairs == 0) throw ArgumentError("n_pairs must be at least 1");
  if (prompts.empty()) throw ArgumentError("prompt set is empty");
  for (std::size_t x : prompts) reward.space().check_prompt(x);
  Dataset out;
  out.space = reward.space();
  out.generator = {{"label_mode", to_string(options.mode)},
                   {"n_pairs", n_pairs}};
  out.records.reserve(n_pairs);
  std::uniform_int_distribution<std::size_t> pick(0, prompts.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t n = 0; n < n_pairs; ++n) {
    const std::size_t x = prompts[pick(rng)];
    TokenSeq a, b;
    double ra = 0.0, rb = 0.0;
    std::size_t attempt = 0;
    for (;; ++attempt) {
      if (attempt >= options.max_retries) {
        throw RuntimeFailure("could not draw two distinct responses for prompt " +
                             std::to_string(x) + " after " +
                             std::to_string(options.max_retries) + " attempts");
      }
      a = sampler(x, rng);
      b = sampler(x, rng);
      if (a == b) continue;
      ra = reward.reward(x, a);
      rb = reward.reward(x, b);
      if (options.mode == LabelMode::kHard && ra == rb) continue;
      break;
    }
    DatasetRecord rec;
    rec.triplet.prompt = x;
    const double p = numerics::sigmoid(ra - rb);
    bool a_wins = false;
    switch (options.mode) {
      case LabelMode::kHard:
        a_wins = ra > rb;
        rec.triplet.label = 1.0;
        break;
      case LabelMode::kSoft:
        a_wins = p >= 0.5;
        rec.triplet.label = a_wins ? p : numerics::sigmoid(rb - ra);
        break;
      case LabelMode::kSampled:
        a_wins = unit(rng) < p;
        rec.triplet.label = 1.0;
        break;
    }
    rec.triplet.chosen = a_wins ? a : b;
    rec.triplet.rejected = a_wins ? b : a;
    rec.r_chosen = a_wins ? ra : rb;
    rec.r_rejected = a_wins ? rb : ra;
    out.records.push_back(std::move(rec));
  }
  return out;
}

Dataset all_pairs_soft(const RewardSpec& reward) {
  Dataset out;
  out.space = reward.space();
  out.generator = {{"label_mode", "soft"}, {"pairs", "all"}};
  const auto& responses = reward.index().responses();
  for (std::size_t x = 0; x < out.space.num_prompts; ++x) {
    for (std::size_t a = 0; a < responses.size(); ++a) {
      for (std::size_t b = 0; b < responses.size(); ++b) {
        if (a == b) continue;
        const double ra = reward.reward_at(x, a);
        const double rb = reward.reward_at(x, b);
        DatasetRecord rec;
        rec.triplet = {x, responses[a], responses[b], numerics::sigmoid(ra - rb)};
        rec.r_chosen = ra;
        rec.r_rejected = rb;
        out.records.push_back(std::move(rec));
      }
    }
  }
  return out;
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  nlohmann::json header = {{"format", "edpo-preferences"},
                           {"version", 1},
                           {"space", policy::space_to_json(dataset.space)},
                           {"generator", dataset.generator}};
  out << header.dump() << '\n';
  for (const auto& rec : dataset.records) {
    nlohmann::json line = {
        {"prompt", rec.triplet.prompt},
        {"chosen", rec.triplet.chosen},
        {"rejected", rec.triplet.rejected},
        {"label", rec.triplet.label},
        {"meta", {{"r_chosen", rec.r_chosen}, {"r_rejected", rec.r_rejected}}}};
    out << line.dump() << '\n';
  }
  if (!out) throw RuntimeFailure("failed writing dataset");
}

Dataset read_dataset(std::istream& in) {
  Dataset out;
  std::string text;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    try {
      if (!have_header) {
        if (j.value("format", "") != "edpo-preferences") {
          throw ParseError("not an edpo-preferences file", line_no);
        }
        if (j.value("version", 0) != 1) {
          throw ParseError("unsupported dataset version", line_no);
        }
        out.space = policy::space_from_json(j.at("space"));
        out.generator = j.value("generator", nlohmann::json::object());
        have_header = true;
        continue;
      }
      DatasetRecord rec;
      rec.triplet.prompt = j.at("prompt").get<std::size_t>();
      rec.triplet.chosen = j.at("chosen").get<TokenSeq>();
      rec.triplet.rejected = j.at("rejected").get<TokenSeq>();
      rec.triplet.label = j.at("label").get<double>();
      if (j.contains("meta")) {
        rec.r_chosen = j["meta"].value("r_chosen", 0.0);
        rec.r_rejected = j["meta"].value("r_rejected", 0.0);
      }
      rec.triplet.validate(out.space);
      out.records.push_back(std::move(rec));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!have_header) throw ParseError("missing dataset header", line_no + 1);
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  write_dataset(out, dataset);
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace edpo::oracle
