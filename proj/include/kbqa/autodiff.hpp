// Copyright 2026 The kbqa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KBQA_AUTODIFF_HPP_
#define KBQA_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbqa/tensor.hpp"

namespace kbqa {

// A trainable matrix. grad accumulates across backward() calls until the
// optimizer clears it.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tape;

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  double scalar() const { return value().data.at(0); }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Records operations in execution order; backward() replays them in reverse.
// A tape built with record_gradients = false only evaluates values.
class Tape {
 public:
  // Called with the tape and the id of the node being differentiated.
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Each parameter maps to one leaf per tape; its gradient is added into
  // Parameter::grad by backward().
  Var param(Parameter& p);

  // Low-level node creation used by the ops. backward may be empty.
  Var record(Matrix value, std::span<const Var> parents, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  // Lazily allocated gradient buffer for node v.
  Matrix& grad(Var v) { return grad_at(v.id()); }
  Matrix& grad_at(std::uint32_t id);
  const Matrix& value_at(std::uint32_t id) const { return nodes_[id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d loss / d loss = 1 and propagates. Throws NonScalarLoss.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> param_nodes_;
  bool recording_;
};

namespace ops {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);
Var add(Var a, Var b);
Var add_row(Var a, Var row);  // broadcasts a 1 x n row over every row of a
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
// x * Phi(x) with the exact normal CDF.
Var gelu(Var a);
Var log(Var a);
Var softmax(Var a);  // row-wise
Var log_softmax(Var a);
// Entries where mask is true are replaced by value (no gradient flows there).
Var masked_fill(Var a, const std::vector<bool>& mask, double value);
Var causal_mask(Var scores);  // -inf strictly above the diagonal
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-10);
Var embedding(Var table, std::span<const int> ids);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var select_rows(Var a, std::span<const std::size_t> rows);
Var mean_rows(Var a);
Var sum(Var a);
// Sum over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy_sum(Var logits, std::span<const int> targets);
Var dropout(Var a, double rate, std::mt19937_64& rng);

}  // namespace ops
}  // namespace kbqa

#endif  // KBQA_AUTODIFF_HPP_
