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

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "edpo/numerics/tensor.hpp"

namespace edpo::numerics {

// Self-describing text container: named tensors plus string metadata.
//
//   edpo-checkpoint 1
//   meta <key> <value to end of line>
//   tensor <name> <rank> <extent>...
//   <hex-float values separated by single spaces>
//   end
//
// Values are written as hexadecimal floats, so a write/read round trip is
// bit-exact, including signed zeros.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  bool bit_equal(const Checkpoint& other) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string format_hex(double value);
double parse_hex(std::string_view text);

}  // namespace edpo::numerics
