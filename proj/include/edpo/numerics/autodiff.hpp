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
#include <functional>
#include <span>
#include <vector>

#include "edpo/numerics/tensor.hpp"

namespace edpo::numerics {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive and not cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  double item() const { return value().item(); }
  std::size_t index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Reverse-mode computation record. Nodes are appended in evaluation order, so
// the node list is already topologically sorted and backward() replays it in
// reverse, visiting each op once.
//
// Leaves created with leaf() point at an external Tensor; backward() adds the
// adjoint into that tensor's grad buffer (when it requires grad). Gradients
// accumulate across backward() calls until the caller zeroes them.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor& parameter);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var tanh(Var a);

  // Rank-2 (m x n) times rank-1 (n) -> rank-1 (m).
  Var matvec(Var matrix, Var vec);
  // Row r of a rank-2 tensor as a rank-1 tensor.
  Var row(Var matrix, std::size_t r);
  Var log_softmax(Var v);
  // Scalar v[i].
  Var pick(Var v, std::size_t i);
  // Scalar sum of all entries.
  Var sum(Var v);
  // Element-wise sum of same-shape values, accumulated left to right.
  Var sum(std::span<const Var> terms);
  // Element-wise mean of same-shape values.
  Var mean(std::span<const Var> terms);
  // Scalar log(sigmoid(x)).
  Var logsigmoid(Var x);

  // Requires a scalar root. Throws ArgumentError otherwise.
  void backward(Var root);

  // Adjoint of a node after the last backward() call (empty before).
  std::span<const double> adjoint(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  friend class Var;
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* target = nullptr;
  };

  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  void check(Var v) const;
  std::vector<double>& grad_of(std::size_t i) { return nodes_[i].grad; }

  std::vector<Node> nodes_;
};

}  // namespace edpo::numerics
