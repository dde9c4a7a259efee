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

#include "edpo/policy/sequence.hpp"

#include <functional>

#include "edpo/errors.hpp"

namespace edpo::policy {

void SequenceSpace::validate() const {
  if (vocab.size < 2) throw ArgumentError("vocabulary needs at least 2 tokens");
  if (vocab.eos && *vocab.eos >= vocab.size) {
    throw ArgumentError("EOS token outside the vocabulary");
  }
  if (!vocab.labels.empty() && vocab.labels.size() != vocab.size) {
    throw ArgumentError("token label count does not match vocabulary size");
  }
  if (num_prompts == 0) throw ArgumentError("prompt set is empty");
  if (max_len == 0) throw ArgumentError("max_len must be at least 1");
}

void SequenceSpace::check_prompt(std::size_t prompt) const {
  if (prompt >= num_prompts) {
    throw ArgumentError("unknown prompt id " + std::to_string(prompt) +
                        " (prompt set has " + std::to_string(num_prompts) +
                        ")");
  }
}

void SequenceSpace::check_response(std::span<const Token> tokens) const {
  if (tokens.empty()) throw ArgumentError("response is empty");
  if (tokens.size() > max_len) {
    throw ArgumentError("response longer than max_len " +
                        std::to_string(max_len));
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab.size) {
      throw ArgumentError("token " + std::to_string(tokens[i]) +
                          " outside vocabulary of size " +
                          std::to_string(vocab.size));
    }
    if (vocab.eos && tokens[i] == *vocab.eos && i + 1 != tokens.size()) {
      throw ArgumentError("EOS before the end of the response");
    }
  }
  if (!vocab.eos && tokens.size() != max_len) {
    throw ArgumentError("fixed-length space expects " + std::to_string(max_len) +
                        " tokens, got " + std::to_string(tokens.size()));
  }
  if (vocab.eos && tokens.size() < max_len && tokens.back() != *vocab.eos) {
    throw ArgumentError("short response must end with EOS");
  }
}

bool SequenceSpace::is_response(std::span<const Token> tokens) const {
  try {
    check_response(tokens);
    return true;
  } catch (const ArgumentError&) {
    return false;
  }
}

std::vector<TokenSeq> enumerate_responses(const SequenceSpace& space) {
  space.validate();
  std::vector<TokenSeq> out;
  TokenSeq prefix;
  std::function<void()> extend = [&]() {
    for (Token v = 0; v < space.vocab.size; ++v) {
      prefix.push_back(v);
      const bool stops = space.vocab.eos && v == *space.vocab.eos;
      if (stops || prefix.size() == space.max_len) {
        out.push_back(prefix);
      } else {
        extend();
      }
      prefix.pop_back();
    }
  };
  extend();
  return out;
}

std::string format_tokens(std::span<const Token> tokens) {
  std::string s = "[";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) s += ' ';
    s += std::to_string(tokens[i]);
  }
  return s + "]";
}

}  // namespace edpo::policy
