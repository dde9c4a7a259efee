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

#include "edpo/numerics/autodiff.hpp"

#include <cmath>

#include "edpo/errors.hpp"
#include "edpo/numerics/math.hpp"

namespace edpo::numerics {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ArgumentError("Var is not attached to a tape");
  return tape_->nodes_.at(index_).value;
}

void Tape::check(Var v) const {
  if (v.tape_ != this || v.index_ >= nodes_.size()) {
    throw ArgumentError("Var does not belong to this tape");
  }
}

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.inputs = std::move(inputs);
  node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return push(std::move(value), {}, nullptr);
}

Var Tape::leaf(Tensor& parameter) {
  Tensor copy(parameter.shape(),
              std::vector<double>(parameter.data().begin(),
                                  parameter.data().end()));
  Var v = push(std::move(copy), {}, nullptr);
  nodes_.back().target = &parameter;
  return v;
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!x.same_shape(y)) throw ArgumentError("add: shape mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return push(std::move(out), {a.index_, b.index_},
              [](Tape& t, std::size_t self) {
                const auto& g = t.grad_of(self);
                auto& in = t.nodes_[self].inputs;
                auto& ga = t.grad_of(in[0]);
                auto& gb = t.grad_of(in[1]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                  ga[i] += g[i];
                  gb[i] += g[i];
                }
              });
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!x.same_shape(y)) throw ArgumentError("sub: shape mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return push(std::move(out), {a.index_, b.index_},
              [](Tape& t, std::size_t self) {
                const auto& g = t.grad_of(self);
                auto& in = t.nodes_[self].inputs;
                auto& ga = t.grad_of(in[0]);
                auto& gb = t.grad_of(in[1]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                  ga[i] += g[i];
                  gb[i] -= g[i];
                }
              });
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!x.same_shape(y)) throw ArgumentError("mul: shape mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return push(std::move(out), {a.index_, b.index_},
              [](Tape& t, std::size_t self) {
                const auto& g = t.grad_of(self);
                auto& in = t.nodes_[self].inputs;
                const Tensor& x = t.nodes_[in[0]].value;
                const Tensor& y = t.nodes_[in[1]].value;
                auto& ga = t.grad_of(in[0]);
                auto& gb = t.grad_of(in[1]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                  ga[i] += g[i] * y[i];
                  gb[i] += g[i] * x[i];
                }
              });
}

Var Tape::scale(Var a, double factor) {
  check(a);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  return push(std::move(out), {a.index_},
              [factor](Tape& t, std::size_t self) {
                const auto& g = t.grad_of(self);
                auto& ga = t.grad_of(t.nodes_[self].inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
              });
}

Var Tape::add_scalar(Var a, double offset) {
  check(a);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + offset;
  return push(std::move(out), {a.index_}, [](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_of(t.nodes_[self].inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var Tape::tanh(Var a) {
  check(a);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return push(std::move(out), {a.index_}, [](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const Tensor& y = t.nodes_[self].value;
    auto& ga = t.grad_of(t.nodes_[self].inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Var Tape::matvec(Var matrix, Var vec) {
  check(matrix);
  check(vec);
  const Tensor& w = matrix.value();
  const Tensor& x = vec.value();
  if (w.rank() != 2 || x.rank() != 1 || w.cols() != x.size()) {
    throw ArgumentError("matvec: expected [m, n] x [n], got " +
                        shape_string(w.shape()) + " x " +
                        shape_string(x.shape()));
  }
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += w[i * n + j] * x[j];
    out[i] = acc;
  }
  return push(std::move(out), {matrix.index_, vec.index_},
              [m, n](Tape& t, std::size_t self) {
                const auto& g = t.grad_of(self);
                auto& in = t.nodes_[self].inputs;
                const Tensor& w = t.nodes_[in[0]].value;
                const Tensor& x = t.nodes_[in[1]].value;
                auto& gw = t.grad_of(in[0]);
                auto& gx = t.grad_of(in[1]);
                for (std::size_t i = 0; i < m; ++i) {
                  if (g[i] == 0.0) continue;
                  for (std::size_t j = 0; j < n; ++j) {
                    gw[i * n + j] += g[i] * x[j];
                    gx[j] += g[i] * w[i * n + j];
                  }
                }
              });
}

Var Tape::row(Var matrix, std::size_t r) {
  check(matrix);
  const Tensor& w = matrix.value();
  if (w.rank() != 2 || r >= w.rows()) {
    throw ArgumentError("row: index out of range");
  }
  const std::size_t n = w.cols();
  auto src = w.row(r);
  Tensor out({n}, std::vector<double>(src.begin(), src.end()));
  return push(std::move(out), {matrix.index_},
              [r, n](Tape& t, std::size_t self) {
                const auto& g = t.grad_of(self);
                auto& gw = t.grad_of(t.nodes_[self].inputs[0]);
                for (std::size_t j = 0; j < n; ++j) gw[r * n + j] += g[j];
              });
}

Var Tape::log_softmax(Var v) {
  check(v);
  const Tensor& x = v.value();
  if (x.rank() != 1) throw ArgumentError("log_softmax: expected a vector");
  Tensor out({x.size()}, numerics::log_softmax(x.data()));
  return push(std::move(out), {v.index_}, [](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const Tensor& y = t.nodes_[self].value;
    auto& gx = t.grad_of(t.nodes_[self].inputs[0]);
    double gsum = 0.0;
    for (double gi : g) gsum += gi;
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] - std::exp(y[i]) * gsum;
    }
  });
}

Var Tape::pick(Var v, std::size_t i) {
  check(v);
  const Tensor& x = v.value();
  if (i >= x.size()) throw ArgumentError("pick: index out of range");
  return push(Tensor::scalar(x[i]), {v.index_},
              [i](Tape& t, std::size_t self) {
                t.grad_of(t.nodes_[self].inputs[0])[i] += t.grad_of(self)[0];
              });
}

Var Tape::sum(Var v) {
  check(v);
  const Tensor& x = v.value();
  double acc = 0.0;
  for (double xi : x.data()) acc += xi;
  return push(Tensor::scalar(acc), {v.index_}, [](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    for (double& gi : t.grad_of(t.nodes_[self].inputs[0])) gi += g;
  });
}

Var Tape::sum(std::span<const Var> terms) {
  if (terms.empty()) throw ArgumentError("sum: no terms");
  std::vector<std::size_t> inputs;
  inputs.reserve(terms.size());
  for (Var v : terms) {
    check(v);
    if (!v.value().same_shape(terms[0].value())) {
      throw ArgumentError("sum: shape mismatch");
    }
    inputs.push_back(v.index_);
  }
  Tensor out(terms[0].value().shape());
  for (Var v : terms) {
    const Tensor& x = v.value();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += x[i];
  }
  return push(std::move(out), std::move(inputs),
              [](Tape& t, std::size_t self) {
                const auto& g = t.grad_of(self);
                for (std::size_t in : t.nodes_[self].inputs) {
                  auto& gi = t.grad_of(in);
                  for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                }
              });
}

Var Tape::mean(std::span<const Var> terms) {
  Var total = sum(terms);
  return scale(total, 1.0 / static_cast<double>(terms.size()));
}

Var Tape::logsigmoid(Var x) {
  check(x);
  const double v = x.value().item();
  return push(Tensor::scalar(numerics::logsigmoid(v)), {x.index_},
              [v](Tape& t, std::size_t self) {
                // d/dx log(sigmoid(x)) = sigmoid(-x)
                t.grad_of(t.nodes_[self].inputs[0])[0] +=
                    t.grad_of(self)[0] * sigmoid(-v);
              });
}

void Tape::backward(Var root) {
  check(root);
  if (root.value().size() != 1) {
    throw ArgumentError("backward requires a scalar root, got shape " +
                        shape_string(root.value().shape()));
  }
  for (std::size_t i = 0; i <= root.index_; ++i) {
    nodes_[i].grad.assign(nodes_[i].value.size(), 0.0);
  }
  nodes_[root.index_].grad[0] = 1.0;
  for (std::size_t i = root.index_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward) node.backward(*this, i);
    if (node.target != nullptr && node.target->requires_grad()) {
      auto dst = node.target->grad();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += node.grad[k];
    }
  }
}

std::span<const double> Tape::adjoint(Var v) const {
  check(v);
  return nodes_[v.index_].grad;
}

}  // namespace edpo::numerics
