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

#include "edpo/numerics/adam.hpp"

#include <cmath>
#include <string>

#include "edpo/errors.hpp"

namespace edpo::numerics {

AdamState make_adam_state(std::span<Tensor* const> params) {
  AdamState state;
  for (const Tensor* p : params) {
    state.first_moment.emplace_back(p->size(), 0.0);
    state.second_moment.emplace_back(p->size(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor* const> params, AdamState& state, double lr,
               const AdamConfig& config) {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ConfigError("learning rate must be positive, got " +
                      std::to_string(lr));
  }
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ArgumentError("optimizer state does not match parameter count");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.first_moment[k].size() != params[k]->size() ||
        state.second_moment[k].size() != params[k]->size()) {
      throw ArgumentError("optimizer state shape mismatch for parameter " +
                          std::to_string(k));
    }
    if (!params[k]->requires_grad()) {
      throw ArgumentError("parameter " + std::to_string(k) +
                          " has no gradient buffer");
    }
  }

  state.steps += 1;
  const double t = static_cast<double>(state.steps);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    auto g = p.grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      if (config.weight_decay != 0.0) p[i] -= lr * config.weight_decay * p[i];
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

}  // namespace edpo::numerics
