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

#include <span>
#include <vector>

namespace edpo::numerics {

// log(sum(exp(v))) with max-subtraction. Throws ArgumentError on empty input.
double logsumexp(std::span<const double> v);

// v_i - logsumexp(v). Throws ArgumentError on empty input.
std::vector<double> log_softmax(std::span<const double> v);
void log_softmax_into(std::span<const double> v, std::span<double> out);

// Single entry of log_softmax(v) without materializing the vector.
double log_softmax_at(std::span<const double> v, std::size_t index);

std::vector<double> softmax(std::span<const double> v);

// log(1 + exp(x)), stable for large |x|. Infinities map to their limits and
// NaN propagates.
double softplus(double x);

// log(sigmoid(x)) = -softplus(-x).
double logsigmoid(double x);

double sigmoid(double x);

}  // namespace edpo::numerics
