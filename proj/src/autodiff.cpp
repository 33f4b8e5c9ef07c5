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

#include "kbqa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kbqa/error.hpp"

namespace kbqa {

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, {}, nullptr, false});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  nodes_.push_back({p.value, {}, {}, &p, recording_});
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return {this, id};
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  if (recording_) {
    for (const auto& v : parents) needs = needs || nodes_[v.id()].needs_grad;
  }
  nodes_.push_back({std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Matrix& Tape::grad_at(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

void Tape::backward(Var loss) {
  const auto& v = value(loss);
  if (v.rows != 1 || v.cols != 1) throw NonScalarLoss();
  grad(loss).data[0] += 1.0;
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && !n.grad.empty()) n.backward(*this, static_cast<std::uint32_t>(i));
  }
  for (auto& n : nodes_) {
    if (n.param && !n.grad.empty()) kernels::add_inplace(n.param->grad, n.grad);
  }
}

namespace ops {
namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(op) + " " + a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  Matrix out;
  kernels::matmul(a.value(), b.value(), out);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(a)) kernels::matmul_nt(g, tp.value(b), tp.grad(a), true);
    if (tp.needs_grad(b)) kernels::matmul_tn(tp.value(a), g, tp.grad(b), true);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = *a.tape();
  Matrix out;
  kernels::matmul_nt(a.value(), b.value(), out);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(a)) kernels::matmul(g, tp.value(b), tp.grad(a), true);
    if (tp.needs_grad(b)) kernels::matmul_tn(g, tp.value(a), tp.grad(b), true);
  });
}

Var transpose(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.cols, x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
  return a.tape()->record(std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& ga = tp.grad(a);
    for (std::size_t i = 0; i < ga.rows; ++i)
      for (std::size_t j = 0; j < ga.cols; ++j) ga(i, j) += g(j, i);
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Matrix out = a.value();
  kernels::add_inplace(out, b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(a)) kernels::add_inplace(tp.grad(a), g);
    if (tp.needs_grad(b)) kernels::add_inplace(tp.grad(b), g);
  });
}

Var add_row(Var a, Var row) {
  Matrix out = a.value();
  kernels::add_row_inplace(out, row.value());
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(a)) kernels::add_inplace(tp.grad(a), g);
    if (tp.needs_grad(row)) {
      Matrix& gr = tp.grad(row);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) gr.data[j] += g(i, j);
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Matrix out = a.value();
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    if (tp.needs_grad(a)) {
      auto& ga = tp.grad(a).data;
      const auto& bv = tp.value(b).data;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i] * bv[i];
    }
    if (tp.needs_grad(b)) {
      auto& gb = tp.grad(b).data;
      const auto& av = tp.value(a).data;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g.data[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  for (auto& v : out.data) v *= s;
  return a.tape()->record(std::move(out), {a}, [a, s](Tape& tp, std::uint32_t self) {
    kernels::add_inplace(tp.grad(a), tp.grad_at(self), s);
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return a.tape()->record(std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    const auto& x = tp.value(a).data;
    auto& ga = tp.grad(a).data;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (x[i] > 0.0) ga[i] += g.data[i];
    }
  });
}

Var gelu(Var a) {
  Matrix out = a.value();
  kernels::gelu_inplace(out);
  return a.tape()->record(std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    const auto& x = tp.value(a).data;
    auto& ga = tp.grad(a).data;
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * M_SQRT1_2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
      ga[i] += g.data[i] * (cdf + x[i] * pdf);
    }
  });
}

Var log(Var a) {
  Matrix out = a.value();
  for (auto& v : out.data) v = std::log(v);
  return a.tape()->record(std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    const auto& x = tp.value(a).data;
    auto& ga = tp.grad(a).data;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i] / x[i];
  });
}

Var softmax(Var a) {
  Matrix out = a.value();
  kernels::softmax_rows(out);
  return a.tape()->record(std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& y = tp.value_at(self);
    Matrix& ga = tp.grad(a);
    for (std::size_t i = 0; i < y.rows; ++i) {
      const double inner = kernels::dot(&g.data[i * y.cols], &y.data[i * y.cols], y.cols);
      for (std::size_t j = 0; j < y.cols; ++j) ga(i, j) += y(i, j) * (g(i, j) - inner);
    }
  });
}

Var log_softmax(Var a) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows; ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (auto& v : r) v -= lse;
  }
  return a.tape()->record(std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    const Matrix& y = tp.value_at(self);
    Matrix& ga = tp.grad(a);
    for (std::size_t i = 0; i < y.rows; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < y.cols; ++j) gs += g(i, j);
      for (std::size_t j = 0; j < y.cols; ++j) ga(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
    }
  });
}

Var masked_fill(Var a, const std::vector<bool>& mask, double value) {
  Matrix out = a.value();
  if (mask.size() != out.size()) {
    throw ShapeMismatch("mask of " + std::to_string(mask.size()) + " for " + out.shape_string());
  }
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (mask[i]) out.data[i] = value;
  }
  return a.tape()->record(std::move(out), {a}, [a, mask](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    auto& ga = tp.grad(a).data;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (!mask[i]) ga[i] += g.data[i];
    }
  });
}

Var causal_mask(Var scores) {
  const Matrix& s = scores.value();
  std::vector<bool> mask(s.size(), false);
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t j = i + 1; j < s.cols; ++j) mask[i * s.cols + j] = true;
  return masked_fill(scores, mask, -std::numeric_limits<double>::infinity());
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Matrix out, normalized;
  std::vector<double> inv_std;
  kernels::layer_norm(x.value(), gamma.value(), beta.value(), eps, out, &normalized, &inv_std);
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Tape& tp, std::uint32_t self) {
        const Matrix& g = tp.grad_at(self);
        const Matrix& gam = tp.value(gamma);
        const std::size_t n = g.cols;
        if (tp.needs_grad(beta)) {
          Matrix& gb = tp.grad(beta);
          for (std::size_t i = 0; i < g.rows; ++i)
            for (std::size_t j = 0; j < n; ++j) gb.data[j] += g(i, j);
        }
        if (tp.needs_grad(gamma)) {
          Matrix& gg = tp.grad(gamma);
          for (std::size_t i = 0; i < g.rows; ++i)
            for (std::size_t j = 0; j < n; ++j) gg.data[j] += g(i, j) * normalized(i, j);
        }
        if (tp.needs_grad(x)) {
          Matrix& gx = tp.grad(x);
          std::vector<double> dxh(n);
          for (std::size_t i = 0; i < g.rows; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dxh[j] = g(i, j) * gam.data[j];
              mean_d += dxh[j];
              mean_dx += dxh[j] * normalized(i, j);
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              gx(i, j) += inv_std[i] * (dxh[j] - mean_d - normalized(i, j) * mean_dx);
            }
          }
        }
      });
}

Var embedding(Var table, std::span<const int> ids) {
  const Matrix& tab = table.value();
  Matrix out(ids.size(), tab.cols);
  std::vector<int> rows(ids.begin(), ids.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= tab.rows) {
      throw ShapeMismatch("embedding id " + std::to_string(rows[i]) + " for table " +
                          tab.shape_string());
    }
    std::copy_n(&tab.data[rows[i] * tab.cols], tab.cols, &out.data[i * tab.cols]);
  }
  return table.tape()->record(std::move(out), {table}, [table, rows](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& gt = tp.grad(table);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < g.cols; ++j) gt(rows[i], j) += g(i, j);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeMismatch("concat_cols row count " + p.value().shape_string());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(&v.data[i * v.cols], v.cols, &out.data[i * cols + off]);
    off += v.cols;
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [keep](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    std::size_t off = 0;
    for (const auto& p : keep) {
      const std::size_t c = tp.value(p).cols;
      if (tp.needs_grad(p)) {
        Matrix& gp = tp.grad(p);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < c; ++j) gp(i, j) += g(i, off + j);
      }
      off += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeMismatch("concat_rows column count " + p.value().shape_string());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + off);
    off += p.value().size();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [keep](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    std::size_t off = 0;
    for (const auto& p : keep) {
      const std::size_t n = tp.value(p).size();
      if (tp.needs_grad(p)) {
        auto& gp = tp.grad(p).data;
        for (std::size_t i = 0; i < n; ++i) gp[i] += g.data[off + i];
      }
      off += n;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Matrix& v = a.value();
  if (begin > end || end > v.cols) {
    throw ShapeMismatch("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                        v.shape_string());
  }
  Matrix out(v.rows, end - begin);
  for (std::size_t i = 0; i < v.rows; ++i)
    std::copy_n(&v.data[i * v.cols + begin], end - begin, &out.data[i * out.cols]);
  return a.tape()->record(std::move(out), {a}, [a, begin](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(i, begin + j) += g(i, j);
  });
}

Var select_rows(Var a, std::span<const std::size_t> rows) {
  const Matrix& v = a.value();
  Matrix out(rows.size(), v.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= v.rows) throw ShapeMismatch("row " + std::to_string(rows[i]) + " of " + v.shape_string());
    std::copy_n(&v.data[rows[i] * v.cols], v.cols, &out.data[i * v.cols]);
  }
  std::vector<std::size_t> keep(rows.begin(), rows.end());
  return a.tape()->record(std::move(out), {a}, [a, keep](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& ga = tp.grad(a);
    for (std::size_t i = 0; i < keep.size(); ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(keep[i], j) += g(i, j);
  });
}

Var mean_rows(Var a) {
  const Matrix& v = a.value();
  Matrix out(1, v.cols);
  for (std::size_t i = 0; i < v.rows; ++i)
    for (std::size_t j = 0; j < v.cols; ++j) out.data[j] += v(i, j);
  for (auto& x : out.data) x /= static_cast<double>(v.rows);
  return a.tape()->record(std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    Matrix& ga = tp.grad(a);
    const double inv = 1.0 / static_cast<double>(ga.rows);
    for (std::size_t i = 0; i < ga.rows; ++i)
      for (std::size_t j = 0; j < ga.cols; ++j) ga(i, j) += g.data[j] * inv;
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return a.tape()->record(Matrix(1, 1, s), {a}, [a](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_at(self).data[0];
    for (auto& v : tp.grad(a).data) v += g;
  });
}

Var cross_entropy_sum(Var logits, std::span<const int> targets) {
  const Matrix& z = logits.value();
  if (targets.size() != z.rows) {
    throw ShapeMismatch(std::to_string(targets.size()) + " targets for logits " + z.shape_string());
  }
  Matrix probs = z;
  kernels::softmax_rows(probs);
  double loss = 0.0;
  std::vector<int> tgt(targets.begin(), targets.end());
  for (int t : tgt) {
    if (t < 0 || static_cast<std::size_t>(t) >= z.cols) {
      throw ShapeMismatch("target " + std::to_string(t) + " for logits " + z.shape_string());
    }
  }
  for (std::size_t i = 0; i < z.rows; ++i) {
    const auto r = z.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    loss += mx + std::log(s) - r[tgt[i]];
  }
  return logits.tape()->record(
      Matrix(1, 1, loss), {logits},
      [logits, tgt, probs = std::move(probs)](Tape& tp, std::uint32_t self) {
        const double g = tp.grad_at(self).data[0];
        Matrix& gz = tp.grad(logits);
        for (std::size_t i = 0; i < probs.rows; ++i) {
          for (std::size_t j = 0; j < probs.cols; ++j) gz(i, j) += g * probs(i, j);
          gz(i, tgt[i]) -= g;
        }
      });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  std::vector<double> factor(a.value().size());
  for (auto& f : factor) f = keep(rng) ? s : 0.0;
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= factor[i];
  return a.tape()->record(std::move(out), {a}, [a, factor = std::move(factor)](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_at(self);
    auto& ga = tp.grad(a).data;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i] * factor[i];
  });
}

}  // namespace ops
}  // namespace kbqa
