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

#include "edpo/policy/policy.hpp"

#include <cmath>

#include "edpo/errors.hpp"
#include "edpo/numerics/math.hpp"
#include "edpo/policy/neural.hpp"
#include "edpo/policy/tabular.hpp"

namespace edpo::policy {

Policy::Policy(SequenceSpace space) : space_(std::move(space)) {
  space_.validate();
}

Policy::Policy(const Policy& other)
    : space_(other.space_), names_(other.names_), params_(other.params_) {}

void Policy::add_parameter(std::string name, Tensor tensor) {
  tensor.set_requires_grad(true);
  names_.push_back(std::move(name));
  params_.push_back(std::move(tensor));
}

void Policy::check_prefix_input(std::size_t prompt,
                                std::span<const Token> tokens,
                                std::size_t max_positions) const {
  space_.check_prompt(prompt);
  if (max_positions > space_.max_len) {
    throw ArgumentError("prefix length must be below max_len " +
                        std::to_string(space_.max_len));
  }
  for (Token t : tokens) {
    if (t >= space_.vocab.size) {
      throw ArgumentError("token " + std::to_string(t) +
                          " outside vocabulary of size " +
                          std::to_string(space_.vocab.size));
    }
  }
}

std::vector<double> Policy::logits(std::size_t prompt,
                                   std::span<const Token> prefix) const {
  check_prefix_input(prompt, prefix, prefix.size() + 1);
  forward_passes_.fetch_add(1);
  Tensor rows = compute_logits(prompt, prefix);
  auto last = rows.row(rows.rows() - 1);
  return {last.begin(), last.end()};
}

Tensor Policy::response_logits(std::size_t prompt,
                               std::span<const Token> tokens) const {
  if (tokens.empty()) throw ArgumentError("response is empty");
  check_prefix_input(prompt, tokens, tokens.size());
  forward_passes_.fetch_add(1);
  return compute_logits(prompt, tokens.first(tokens.size() - 1));
}

std::vector<Var> Policy::response_logits(Tape& tape,
                                         std::span<const Var> params,
                                         std::size_t prompt,
                                         std::span<const Token> tokens) const {
  if (tokens.empty()) throw ArgumentError("response is empty");
  if (params.size() != params_.size()) {
    throw ArgumentError("parameter binding does not match the policy");
  }
  check_prefix_input(prompt, tokens, tokens.size());
  forward_passes_.fetch_add(1);
  return compute_logits(tape, params, prompt,
                        tokens.first(tokens.size() - 1));
}

std::vector<Var> Policy::bind(Tape& tape) {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (Tensor& p : params_) vars.push_back(tape.leaf(p));
  return vars;
}

std::vector<Tensor*> Policy::parameter_ptrs() {
  std::vector<Tensor*> out;
  for (Tensor& p : params_) out.push_back(&p);
  return out;
}

std::size_t Policy::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& p : params_) n += p.size();
  return n;
}

void Policy::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double seq_logprob_from_logits(const Tensor& logits,
                               std::span<const Token> tokens) {
  if (logits.rank() != 2 || logits.rows() != tokens.size()) {
    throw ArgumentError("logit rows do not match the response length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    acc += numerics::log_softmax_at(logits.row(i), tokens[i]);
  }
  return acc;
}

double seq_logprob(const Policy& policy, std::size_t prompt,
                   std::span<const Token> tokens) {
  return seq_logprob_from_logits(policy.response_logits(prompt, tokens),
                                 tokens);
}

Var seq_logprob(Tape& tape, std::span<const Var> logit_rows,
                std::span<const Token> tokens) {
  if (logit_rows.size() != tokens.size()) {
    throw ArgumentError("logit rows do not match the response length");
  }
  std::vector<Var> terms;
  terms.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    terms.push_back(tape.pick(tape.log_softmax(logit_rows[i]), tokens[i]));
  }
  return tape.sum(terms);
}

std::size_t sample_categorical(std::span<const double> logits, Rng& rng) {
  const std::vector<double> probs = numerics::softmax(logits);
  const double u = std::generate_canonical<double, 53>(rng);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  // Rounding left u above the final cumulative sum; take the last token with
  // non-zero mass.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

Sequence sample(const Policy& policy, std::size_t prompt, Rng& rng,
                std::size_t max_len, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ArgumentError("temperature must be positive");
  }
  const SequenceSpace& space = policy.space();
  space.check_prompt(prompt);
  if (max_len == 0 || max_len > space.max_len) max_len = space.max_len;
  Sequence seq{prompt, {}};
  while (seq.tokens.size() < max_len) {
    std::vector<double> l = policy.logits(prompt, seq.tokens);
    if (temperature != 1.0) {
      for (double& v : l) v /= temperature;
    }
    const auto tok = static_cast<Token>(sample_categorical(l, rng));
    seq.tokens.push_back(tok);
    if (space.vocab.eos && tok == *space.vocab.eos) break;
  }
  return seq;
}

void check_compatible(const Policy& a, const Policy& b) {
  if (a.architecture() != b.architecture()) {
    throw ArgumentError("policies have different architectures");
  }
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) {
    throw ArgumentError("policies have different parameter counts");
  }
  for (std::size_t k = 0; k < pa.size(); ++k) {
    if (!pa[k].same_shape(pb[k])) {
      throw ArgumentError("parameter '" + a.parameter_names()[k] +
                          "' shape mismatch");
    }
  }
}

std::unique_ptr<Policy> clone_parameters(const Policy& policy) {
  return policy.clone();
}

std::unique_ptr<Policy> merge_parameters(const Policy& a, const Policy& b,
                                         double alpha) {
  check_compatible(a, b);
  auto out = a.clone();
  auto dst = out->parameters();
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t k = 0; k < dst.size(); ++k) {
    for (std::size_t i = 0; i < dst[k].size(); ++i) {
      dst[k][i] = alpha * pa[k][i] + (1.0 - alpha) * pb[k][i];
    }
  }
  return out;
}

void merge_into(Policy& target, const Policy& source, double alpha) {
  check_compatible(target, source);
  auto dst = target.parameters();
  auto src = source.parameters();
  for (std::size_t k = 0; k < dst.size(); ++k) {
    for (std::size_t i = 0; i < dst[k].size(); ++i) {
      dst[k][i] = alpha * src[k][i] + (1.0 - alpha) * dst[k][i];
    }
  }
}

void copy_parameters(Policy& target, const Policy& source) {
  check_compatible(target, source);
  auto dst = target.parameters();
  auto src = source.parameters();
  for (std::size_t k = 0; k < dst.size(); ++k) {
    std::copy(src[k].data().begin(), src[k].data().end(),
              dst[k].data().begin());
  }
}

bool parameters_bit_equal(const Policy& a, const Policy& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    if (!pa[k].bit_equal(pb[k])) return false;
  }
  return true;
}

nlohmann::json space_to_json(const SequenceSpace& space) {
  nlohmann::json j;
  j["vocab_size"] = space.vocab.size;
  j["eos"] = space.vocab.eos ? nlohmann::json(*space.vocab.eos)
                             : nlohmann::json(nullptr);
  j["num_prompts"] = space.num_prompts;
  j["max_len"] = space.max_len;
  if (!space.vocab.labels.empty()) j["labels"] = space.vocab.labels;
  return j;
}

SequenceSpace space_from_json(const nlohmann::json& j) {
  SequenceSpace space;
  space.vocab.size = j.at("vocab_size").get<std::size_t>();
  if (j.contains("eos") && !j.at("eos").is_null()) {
    space.vocab.eos = j.at("eos").get<Token>();
  }
  if (j.contains("labels")) {
    space.vocab.labels = j.at("labels").get<std::vector<std::string>>();
  }
  space.num_prompts = j.at("num_prompts").get<std::size_t>();
  space.max_len = j.at("max_len").get<std::size_t>();
  space.validate();
  return space;
}

numerics::Checkpoint to_checkpoint(
    const Policy& policy, const std::map<std::string, std::string>& meta) {
  numerics::Checkpoint ckpt;
  ckpt.meta = meta;
  ckpt.meta["arch"] = policy.architecture().dump();
  for (std::size_t k = 0; k < policy.parameters().size(); ++k) {
    const Tensor& p = policy.parameters()[k];
    ckpt.tensors.emplace_back(
        policy.parameter_names()[k],
        Tensor(p.shape(), std::vector<double>(p.data().begin(), p.data().end())));
  }
  return ckpt;
}

std::unique_ptr<Policy> policy_from_checkpoint(
    const numerics::Checkpoint& checkpoint) {
  auto it = checkpoint.meta.find("arch");
  if (it == checkpoint.meta.end()) {
    throw ParseError("checkpoint has no architecture block");
  }
  nlohmann::json arch;
  try {
    arch = nlohmann::json::parse(it->second);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad architecture block: ") + e.what());
  }
  const SequenceSpace space = space_from_json(arch.at("space"));
  std::unique_ptr<Policy> policy;
  const std::string kind = arch.at("kind").get<std::string>();
  if (kind == "tabular") {
    policy = std::make_unique<TabularPolicy>(space);
  } else if (kind == "neural") {
    NeuralConfig cfg;
    cfg.dim = arch.at("dim").get<std::size_t>();
    cfg.layers = arch.at("layers").get<std::size_t>();
    cfg.init_scale = arch.at("init_scale").get<double>();
    cfg.seed = arch.at("seed").get<std::uint64_t>();
    policy = std::make_unique<NeuralPolicy>(space, cfg);
  } else {
    throw ParseError("unknown policy kind '" + kind + "'");
  }
  auto params = policy->parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& src = checkpoint.tensor(policy->parameter_names()[k]);
    if (!src.same_shape(params[k])) {
      throw ParseError("tensor '" + policy->parameter_names()[k] +
                       "' has shape " + numerics::shape_string(src.shape()) +
                       ", expected " +
                       numerics::shape_string(params[k].shape()));
    }
    std::copy(src.data().begin(), src.data().end(), params[k].data().begin());
  }
  return policy;
}

void save_policy(const std::filesystem::path& path, const Policy& policy,
                 const std::map<std::string, std::string>& meta) {
  numerics::save_checkpoint(path, to_checkpoint(policy, meta));
}

std::unique_ptr<Policy> load_policy(const std::filesystem::path& path) {
  return policy_from_checkpoint(numerics::load_checkpoint(path));
}

}  // namespace edpo::policy
