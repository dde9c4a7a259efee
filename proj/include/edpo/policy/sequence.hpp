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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace edpo::policy {

using Token = std::uint32_t;
using TokenSeq = std::vector<Token>;

struct Vocab {
  std::size_t size = 2;
  // End-of-sequence token. When set, responses may stop early at it.
  std::optional<Token> eos;
  std::vector<std::string> labels;

  bool operator==(const Vocab&) const = default;
};

// The finite prompt set and the response space over a vocabulary.
struct SequenceSpace {
  Vocab vocab;
  std::size_t num_prompts = 1;
  std::size_t max_len = 1;

  bool variable_length() const { return vocab.eos.has_value(); }

  // Throws ArgumentError on an unusable space.
  void validate() const;

  // Throws ArgumentError unless `tokens` is a complete response: 1..max_len
  // tokens below |V|; for fixed-length spaces exactly max_len tokens; with
  // EOS, EOS only as the final token and required when shorter than max_len.
  void check_response(std::span<const Token> tokens) const;
  bool is_response(std::span<const Token> tokens) const;

  void check_prompt(std::size_t prompt) const;

  bool operator==(const SequenceSpace&) const = default;
};

struct Sequence {
  std::size_t prompt = 0;
  TokenSeq tokens;

  bool operator==(const Sequence&) const = default;
};

// Every complete response of the space, in lexicographic order.
std::vector<TokenSeq> enumerate_responses(const SequenceSpace& space);

std::string format_tokens(std::span<const Token> tokens);

}  // namespace edpo::policy
