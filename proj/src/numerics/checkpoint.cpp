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

#include "edpo/numerics/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "edpo/errors.hpp"

namespace edpo::numerics {
namespace {

constexpr std::string_view kMagic = "edpo-checkpoint 1";

bool is_valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r') return false;
  }
  return true;
}

}  // namespace

std::string format_hex(double value) {
  char buf[64];
  auto [ptr, ec] =
      std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::hex);
  if (ec != std::errc()) throw InternalError("hex float formatting failed");
  return std::string(buf, ptr);
}

double parse_hex(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(),
                                   value, std::chars_format::hex);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("bad hex float '" + std::string(text) + "'");
  }
  return value;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw ArgumentError("checkpoint has no tensor named '" + name + "'");
}

bool Checkpoint::bit_equal(const Checkpoint& other) const {
  if (meta != other.meta || tensors.size() != other.tensors.size()) {
    return false;
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].first != other.tensors[i].first ||
        !tensors[i].second.bit_equal(other.tensors[i].second)) {
      return false;
    }
  }
  return true;
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  out << kMagic << '\n';
  for (const auto& [key, value] : checkpoint.meta) {
    if (!is_valid_name(key) || value.find('\n') != std::string::npos) {
      throw ArgumentError("checkpoint meta entry '" + key +
                          "' is not single-line");
    }
    out << "meta " << key << ' ' << value << '\n';
  }
  for (const auto& [name, t] : checkpoint.tensors) {
    if (!is_valid_name(name)) {
      throw ArgumentError("invalid tensor name '" + name + "'");
    }
    out << "tensor " << name << ' ' << t.rank();
    for (std::size_t extent : t.shape()) out << ' ' << extent;
    out << '\n';
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (i > 0) out << ' ';
      out << format_hex(data[i]);
    }
    out << '\n';
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint checkpoint;
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };

  if (!next_line() || line != kMagic) {
    throw ParseError("missing checkpoint header", 1);
  }
  bool saw_end = false;
  while (next_line()) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    if (line.rfind("meta ", 0) == 0) {
      const std::string rest = line.substr(5);
      const auto space = rest.find(' ');
      if (space == std::string::npos) {
        checkpoint.meta[rest] = "";
      } else {
        checkpoint.meta[rest.substr(0, space)] = rest.substr(space + 1);
      }
      continue;
    }
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream header(line.substr(7));
      std::string name;
      std::size_t rank = 0;
      if (!(header >> name >> rank)) {
        throw ParseError("malformed tensor header", line_no);
      }
      Shape shape(rank);
      for (auto& extent : shape) {
        if (!(header >> extent)) {
          throw ParseError("tensor '" + name + "' has too few extents",
                           line_no);
        }
      }
      const std::size_t header_line = line_no;
      if (!next_line()) {
        throw ParseError("tensor '" + name + "' is missing its values",
                         header_line);
      }
      std::vector<double> values;
      values.reserve(shape_size(shape));
      std::string_view view(line);
      while (!view.empty()) {
        const auto space = view.find(' ');
        values.push_back(parse_hex(view.substr(0, space)));
        if (space == std::string_view::npos) break;
        view.remove_prefix(space + 1);
      }
      if (values.size() != shape_size(shape)) {
        throw ParseError("tensor '" + name + "' expects " +
                             std::to_string(shape_size(shape)) +
                             " values, found " + std::to_string(values.size()),
                         line_no);
      }
      checkpoint.tensors.emplace_back(name,
                                      Tensor(std::move(shape), std::move(values)));
      continue;
    }
    throw ParseError("unrecognized checkpoint line", line_no);
  }
  if (!saw_end) throw ParseError("checkpoint is truncated (no 'end')", line_no);
  return checkpoint;
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  write_checkpoint(out, checkpoint);
  if (!out) throw RuntimeFailure("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace edpo::numerics
