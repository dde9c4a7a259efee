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

#include "edpo/policy/neural.hpp"

#include <cmath>
#include <random>

#include "edpo/errors.hpp"

namespace edpo::policy {
namespace {

enum ParamSlot : std::size_t {
  kPromptEmbed = 0,
  kTokenEmbed = 1,
  kPosEmbed = 2,
  kFirstLayer = 3,
};
constexpr std::size_t kPerLayer = 3;

Tensor normal_tensor(numerics::Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> normal(0.0, stddev);
  for (double& x : t.data()) x = normal(rng);
  return t;
}

}  // namespace

NeuralPolicy::NeuralPolicy(SequenceSpace space, NeuralConfig config)
    : Policy(std::move(space)), config_(config) {
  if (config_.dim == 0) throw ArgumentError("neural policy dim must be >= 1");
  if (!(config_.init_scale > 0.0)) {
    throw ArgumentError("neural policy init_scale must be positive");
  }
  const std::size_t d = config_.dim;
  const std::size_t v = vocab_size();
  const double matrix_scale = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(config_.seed);
  add_parameter("prompt_embed",
                normal_tensor({this->space().num_prompts, d},
                              config_.init_scale, rng));
  add_parameter("token_embed", normal_tensor({v + 1, d}, config_.init_scale, rng));
  add_parameter("pos_embed",
                normal_tensor({this->space().max_len, d}, config_.init_scale, rng));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string prefix = "mix" + std::to_string(l);
    add_parameter(prefix + ".w", normal_tensor({d, d}, matrix_scale, rng));
    add_parameter(prefix + ".u", normal_tensor({d, d}, matrix_scale, rng));
    add_parameter(prefix + ".b", Tensor({d}));
  }
  add_parameter("head.w", normal_tensor({v, d}, matrix_scale, rng));
  add_parameter("head.b", Tensor({v}));
  if (parameter_count() > kMaxNeuralParameters) {
    throw ArgumentError("neural policy has " + std::to_string(parameter_count()) +
                        " parameters; the limit is " +
                        std::to_string(kMaxNeuralParameters));
  }
}

std::unique_ptr<Policy> NeuralPolicy::clone() const {
  return std::make_unique<NeuralPolicy>(*this);
}

nlohmann::json NeuralPolicy::architecture() const {
  return {{"kind", "neural"},
          {"space", space_to_json(space())},
          {"dim", config_.dim},
          {"layers", config_.layers},
          {"init_scale", config_.init_scale},
          {"seed", config_.seed}};
}

std::vector<Var> NeuralPolicy::compute_logits(Tape& tape,
                                              std::span<const Var> params,
                                              std::size_t prompt,
                                              std::span<const Token> tokens) const {
  const std::size_t positions = tokens.size() + 1;
  const auto bos = static_cast<Token>(vocab_size());
  const Var prompt_vec = tape.row(params[kPromptEmbed], prompt);

  std::vector<Var> h;
  h.reserve(positions);
  for (std::size_t t = 0; t < positions; ++t) {
    const Token in = t == 0 ? bos : tokens[t - 1];
    h.push_back(tape.add(tape.add(tape.row(params[kTokenEmbed], in),
                                  tape.row(params[kPosEmbed], t)),
                         prompt_vec));
  }

  for (std::size_t l = 0; l < config_.layers; ++l) {
    const Var w = params[kFirstLayer + l * kPerLayer];
    const Var u = params[kFirstLayer + l * kPerLayer + 1];
    const Var b = params[kFirstLayer + l * kPerLayer + 2];
    std::vector<Var> next;
    next.reserve(positions);
    for (std::size_t t = 0; t < positions; ++t) {
      const Var context =
          tape.mean(std::span<const Var>(h).first(t + 1));
      const Var pre =
          tape.add(tape.add(tape.matvec(w, context), tape.matvec(u, h[t])), b);
      next.push_back(tape.add(h[t], tape.tanh(pre)));
    }
    h = std::move(next);
  }

  const std::size_t head = kFirstLayer + config_.layers * kPerLayer;
  std::vector<Var> out;
  out.reserve(positions);
  for (std::size_t t = 0; t < positions; ++t) {
    out.push_back(tape.add(tape.matvec(params[head], h[t]), params[head + 1]));
  }
  return out;
}

Tensor NeuralPolicy::compute_logits(std::size_t prompt,
                                    std::span<const Token> tokens) const {
  Tape tape;
  std::vector<Var> params;
  for (const Tensor& p : parameters()) {
    params.push_back(tape.constant(
        Tensor(p.shape(), std::vector<double>(p.data().begin(), p.data().end()))));
  }
  std::vector<Var> rows = compute_logits(tape, params, prompt, tokens);
  const std::size_t v = vocab_size();
  Tensor out({rows.size(), v});
  for (std::size_t t = 0; t < rows.size(); ++t) {
    auto src = rows[t].value().data();
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

}  // namespace edpo::policy
