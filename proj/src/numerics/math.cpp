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

#include "edpo/numerics/math.hpp"

#include <algorithm>
#include <cmath>

#include "edpo/errors.hpp"

namespace edpo::numerics {

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("logsumexp of an empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

void log_softmax_into(std::span<const double> v, std::span<double> out) {
  if (v.empty()) throw ArgumentError("log_softmax of an empty vector");
  if (out.size() != v.size()) {
    throw ArgumentError("log_softmax output length mismatch");
  }
  const double lse = logsumexp(v);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
}

std::vector<double> log_softmax(std::span<const double> v) {
  std::vector<double> out(v.size());
  log_softmax_into(v, out);
  return out;
}

double log_softmax_at(std::span<const double> v, std::size_t index) {
  if (index >= v.size()) throw ArgumentError("log_softmax index out of range");
  return v[index] - logsumexp(v);
}

std::vector<double> softmax(std::span<const double> v) {
  std::vector<double> out = log_softmax(v);
  for (double& x : out) x = std::exp(x);
  return out;
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double logsigmoid(double x) { return -softplus(-x); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace edpo::numerics
