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

#ifndef KBQA_TENSOR_HPP_
#define KBQA_TENSOR_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kbqa {

// Dense row-major matrix of 64-bit reals. Vectors are 1 x n, scalars 1 x 1.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_string() const;
};

namespace kernels {

// out (+)= a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out (+)= a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out (+)= a^T * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

void add_inplace(Matrix& dst, const Matrix& src, double scale = 1.0);
void add_row_inplace(Matrix& dst, const Matrix& row);
// x * Phi(x) elementwise, Phi the standard normal CDF.
void gelu_inplace(Matrix& m);

// Row-wise softmax; -inf entries get probability 0.
void softmax_rows(Matrix& m);

// Row-wise (x - mean) / sqrt(var + eps), then * gamma + beta. Writes the
// normalized values and reciprocal std per row when the pointers are non-null.
void layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps,
                Matrix& out, Matrix* normalized = nullptr, std::vector<double>* inv_std = nullptr);

double dot(const double* a, const double* b, std::size_t n);

}  // namespace kernels

}  // namespace kbqa

#endif  // KBQA_TENSOR_HPP_
