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

#include "kbqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kbqa/error.hpp"

namespace kbqa {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) {
    throw ShapeMismatch(std::to_string(r) + "x" + std::to_string(c) + " from " +
                        std::to_string(data.size()) + " values");
  }
}

std::string Matrix::shape_string() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

namespace kernels {

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.cols != b.rows) throw ShapeMismatch("matmul " + a.shape_string() + " * " + b.shape_string());
  if (!accumulate) out = Matrix(a.rows, b.cols);
  const std::size_t n = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* o = out.data.data() + i * n;
    const double* ar = a.data.data() + i * a.cols;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double s = ar[p];
      if (s == 0.0) continue;
      const double* br = b.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += s * br[j];
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.cols != b.cols) throw ShapeMismatch("matmul_nt " + a.shape_string() + " * " + b.shape_string() + "^T");
  if (!accumulate) out = Matrix(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.data.data() + i * a.cols;
    double* o = out.data.data() + i * b.rows;
    for (std::size_t j = 0; j < b.rows; ++j) {
      o[j] += dot(ar, b.data.data() + j * b.cols, a.cols);
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.rows != b.rows) throw ShapeMismatch("matmul_tn " + a.shape_string() + "^T * " + b.shape_string());
  if (!accumulate) out = Matrix(a.cols, b.cols);
  const std::size_t n = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.data.data() + i * a.cols;
    const double* br = b.data.data() + i * n;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double s = ar[p];
      if (s == 0.0) continue;
      double* o = out.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += s * br[j];
    }
  }
}

void add_inplace(Matrix& dst, const Matrix& src, double scale) {
  if (!dst.same_shape(src)) throw ShapeMismatch("add " + dst.shape_string() + " + " + src.shape_string());
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += scale * src.data[i];
}

void gelu_inplace(Matrix& m) {
  for (auto& v : m.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
}

void add_row_inplace(Matrix& dst, const Matrix& row) {
  if (row.rows != 1 || row.cols != dst.cols) {
    throw ShapeMismatch("row broadcast " + dst.shape_string() + " + " + row.shape_string());
  }
  for (std::size_t i = 0; i < dst.rows; ++i) {
    double* d = dst.data.data() + i * dst.cols;
    for (std::size_t j = 0; j < dst.cols; ++j) d[j] += row.data[j];
  }
}

void softmax_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto r = m.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    if (mx == -std::numeric_limits<double>::infinity()) {
      std::fill(r.begin(), r.end(), 0.0);
      continue;
    }
    double sum = 0.0;
    for (auto& v : r) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : r) v /= sum;
  }
}

void layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps,
                Matrix& out, Matrix* normalized, std::vector<double>* inv_std) {
  if (gamma.cols != x.cols || beta.cols != x.cols || gamma.rows != 1 || beta.rows != 1) {
    throw ShapeMismatch("layer_norm " + x.shape_string() + " with gain " + gamma.shape_string());
  }
  out = Matrix(x.rows, x.cols);
  if (normalized) *normalized = Matrix(x.rows, x.cols);
  if (inv_std) inv_std->assign(x.rows, 0.0);
  const double n = static_cast<double>(x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= n;
    const double istd = 1.0 / std::sqrt(var + eps);
    if (inv_std) (*inv_std)[i] = istd;
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double xh = (r[j] - mean) * istd;
      if (normalized) (*normalized)(i, j) = xh;
      out(i, j) = xh * gamma.data[j] + beta.data[j];
    }
  }
}

}  // namespace kernels
}  // namespace kbqa
