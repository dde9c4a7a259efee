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
#include <span>
#include <vector>

#include "edpo/numerics/tensor.hpp"

namespace edpo::numerics {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled (AdamW-style) decay; 0 reproduces plain Adam.
  double weight_decay = 0.0;
};

// Moment buffers, one per parameter tensor, in parameter order.
struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t steps = 0;

  bool operator==(const AdamState&) const = default;
};

// Creates zeroed moment buffers shaped like `params`.
AdamState make_adam_state(std::span<Tensor* const> params);

// One AdamW update using each parameter's grad buffer. Grads are left intact;
// the caller clears them. Throws ConfigError when lr <= 0 and ArgumentError
// when the state does not shape-match the parameters.
void adam_step(std::span<Tensor* const> params, AdamState& state, double lr,
               const AdamConfig& config = {});

}  // namespace edpo::numerics
