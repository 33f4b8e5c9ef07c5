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


#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "kbqa/autodiff.hpp"
#include "kbqa/checkpoint.hpp"
#include "kbqa/error.hpp"
#include "kbqa/optimizer.hpp"
#include "kbqa/tensor.hpp"

namespace kbqa {
namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (auto& v : m.data) v = d(rng);
  return m;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

Matrix naive_transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  }
  return t;
}

void expect_near(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_TRUE(a.same_shape(b)) << a.shape_string() << " vs " << b.shape_string();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], tol) << "at " << i;
}

TEST(Kernels, MatmulByHand) {
  const Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
  const Matrix b(3, 2, {7, 8, 9, 10, 11, 12});
  Matrix out;
  kernels::matmul(a, b, out);
  expect_near(out, Matrix(2, 2, {58, 64, 139, 154}), 0.0);
}

TEST(Kernels, TransposedVariantsMatchNaive) {
  std::mt19937_64 rng(1);
  const auto a = random_matrix(5, 7, rng);
  const auto b = random_matrix(6, 7, rng);
  const auto c = random_matrix(5, 4, rng);
  Matrix nt, tn;
  kernels::matmul_nt(a, b, nt);
  kernels::matmul_tn(a, c, tn);
  expect_near(nt, naive_matmul(a, naive_transpose(b)), 1e-12);
  expect_near(tn, naive_matmul(naive_transpose(a), c), 1e-12);
  Matrix acc = nt;
  kernels::matmul_nt(a, b, acc, true);
  for (std::size_t i = 0; i < acc.size(); ++i) EXPECT_NEAR(acc.data[i], 2 * nt.data[i], 1e-12);
}

TEST(Kernels, SoftmaxRows) {
  Matrix uniform(1, 4, 3.0);
  kernels::softmax_rows(uniform);
  for (double v : uniform.data) EXPECT_DOUBLE_EQ(v, 0.25);

  std::mt19937_64 rng(2);
  auto m = random_matrix(6, 9, rng, -30, 30);
  m(2, 3) = -std::numeric_limits<double>::infinity();
  kernels::softmax_rows(m);
  EXPECT_EQ(m(2, 3), 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0;
    for (double v : m.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Kernels, LayerNormStandardizesRows) {
  std::mt19937_64 rng(3);
  const auto x = random_matrix(5, 16, rng, -4, 9);
  Matrix out;
  kernels::layer_norm(x, Matrix(1, 16, 1.0), Matrix(1, 16, 0.0), 1e-10, out);
  for (std::size_t r = 0; r < out.rows; ++r) {
    double mean = 0, var = 0;
    for (double v : out.row(r)) mean += v;
    mean /= 16;
    for (double v : out.row(r)) var += (v - mean) * (v - mean);
    var /= 16;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-9);
  }
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  Tape tape;
  const Var a = tape.constant(Matrix(2, 3));
  const Var b = tape.constant(Matrix(2, 3));
  try {
    ops::matmul(a, b);
    FAIL() << "expected ShapeMismatch";
  } catch (const ShapeMismatch& e) {
    const std::string msg = e.what();
    const auto first = msg.find("2x3");
    ASSERT_NE(first, std::string::npos) << msg;
    EXPECT_NE(msg.find("2x3", first + 1), std::string::npos) << msg;
  }
  EXPECT_THROW(ops::add(a, tape.constant(Matrix(3, 2))), ShapeMismatch);
}

TEST(Backward, ProductRuleOnScalars) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    Parameter x("x", random_matrix(1, 1, rng));
    Parameter y("y", random_matrix(1, 1, rng));
    Tape tape;
    tape.backward(ops::mul(tape.param(x), tape.param(y)));
    EXPECT_DOUBLE_EQ(x.grad.data[0], y.value.data[0]);
    EXPECT_DOUBLE_EQ(y.grad.data[0], x.value.data[0]);
  }
}

TEST(Backward, RejectsNonScalarLoss) {
  Parameter x("x", Matrix(2, 2, 1.0));
  Tape tape;
  EXPECT_THROW(tape.backward(tape.param(x)), NonScalarLoss);
}

TEST(Backward, ParameterUsedTwiceAccumulates) {
  Parameter x("x", Matrix(1, 1, {3.0}));
  Tape tape;
  const Var a = tape.param(x);
  const Var b = tape.param(x);
  tape.backward(ops::mul(a, b));
  EXPECT_DOUBLE_EQ(x.grad.data[0], 6.0);
}

// Central finite differences of a scalar function of the given parameters.
// The analytic gradient comes from one backward pass.
double max_relative_error(std::vector<Parameter*> params,
                          const std::function<Var(Tape&)>& loss_fn, double eps = 1e-5) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss_fn(tape));
  }
  double worst = 0.0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data[i];
      p->value.data[i] = orig + eps;
      double plus, minus;
      {
        Tape t(false);
        plus = loss_fn(t).scalar();
      }
      p->value.data[i] = orig - eps;
      {
        Tape t(false);
        minus = loss_fn(t).scalar();
      }
      p->value.data[i] = orig;
      const double numeric = (plus - minus) / (2 * eps);
      const double analytic = p->grad.data[i];
      const double denom = std::max(std::abs(numeric) + std::abs(analytic), 1e-6);
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

// Reduces any matrix to a scalar through fixed random weights so every entry
// carries a distinct gradient.
Var weighted_sum(Tape& tape, Var x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Var w = tape.constant(random_matrix(x.rows(), x.cols(), rng));
  return ops::sum(ops::mul(x, w));
}

class GradCheck : public ::testing::Test {
 protected:
  void check(std::vector<Parameter*> params, const std::function<Var(Tape&)>& fn) {
    EXPECT_LE(max_relative_error(std::move(params), fn), 1e-4);
  }
  std::mt19937_64 rng{99};
};

TEST_F(GradCheck, MatmulFamily) {
  Parameter a("a", random_matrix(3, 4, rng)), b("b", random_matrix(4, 5, rng)),
      c("c", random_matrix(5, 4, rng));
  check({&a, &b}, [&](Tape& t) { return weighted_sum(t, ops::matmul(t.param(a), t.param(b)), 1); });
  check({&a, &c}, [&](Tape& t) { return weighted_sum(t, ops::matmul_nt(t.param(a), t.param(c)), 2); });
  check({&a}, [&](Tape& t) { return weighted_sum(t, ops::transpose(t.param(a)), 3); });
}

TEST_F(GradCheck, Elementwise) {
  Parameter a("a", random_matrix(3, 4, rng)), b("b", random_matrix(3, 4, rng)),
      row("row", random_matrix(1, 4, rng)), pos("pos", random_matrix(3, 4, rng, 0.5, 2.0));
  check({&a, &b}, [&](Tape& t) { return weighted_sum(t, ops::add(t.param(a), t.param(b)), 4); });
  check({&a, &row}, [&](Tape& t) { return weighted_sum(t, ops::add_row(t.param(a), t.param(row)), 5); });
  check({&a, &b}, [&](Tape& t) { return weighted_sum(t, ops::mul(t.param(a), t.param(b)), 6); });
  check({&a}, [&](Tape& t) { return weighted_sum(t, ops::scale(t.param(a), -2.5), 7); });
  check({&pos}, [&](Tape& t) { return weighted_sum(t, ops::log(t.param(pos)), 8); });
  for (auto& v : a.value.data) {
    if (std::abs(v) < 0.05) v = 0.3;  // stay away from the kink
  }
  check({&a}, [&](Tape& t) { return weighted_sum(t, ops::relu(t.param(a)), 9); });
  Parameter g("g", random_matrix(3, 5, rng, -3, 3));
  check({&g}, [&](Tape& t) { return weighted_sum(t, ops::gelu(t.param(g)), 11); });
}

TEST(Kernels, GeluValues) {
  Tape tape;
  Parameter x("x", Matrix(1, 4));
  x.value.data = {0.0, 1.0, -1.0, 8.0};
  const Var y = ops::gelu(tape.param(x));
  // x * Phi(x); Phi(1) = 0.841344746068542948...
  EXPECT_EQ(y.value().data[0], 0.0);
  EXPECT_NEAR(y.value().data[1], 0.8413447460685429, 1e-15);
  EXPECT_NEAR(y.value().data[2], -(1.0 - 0.8413447460685429), 1e-15);
  EXPECT_NEAR(y.value().data[3], 8.0, 1e-12);
}

TEST_F(GradCheck, SoftmaxFamily) {
  Parameter a("a", random_matrix(4, 6, rng, -3, 3));
  check({&a}, [&](Tape& t) { return weighted_sum(t, ops::softmax(t.param(a)), 10); });
  check({&a}, [&](Tape& t) { return weighted_sum(t, ops::log_softmax(t.param(a)), 11); });
  const std::vector<int> targets{0, 5, 2, 2};
  check({&a}, [&](Tape& t) { return ops::cross_entropy_sum(t.param(a), targets); });
  Parameter sq("sq", random_matrix(5, 5, rng, -2, 2));
  check({&sq}, [&](Tape& t) { return weighted_sum(t, ops::softmax(ops::causal_mask(t.param(sq))), 12); });
  std::vector<bool> mask(24, false);
  mask[3] = mask[7] = mask[20] = true;
  check({&a}, [&](Tape& t) { return weighted_sum(t, ops::softmax(ops::masked_fill(t.param(a), mask, -1e9)), 13); });
}

TEST_F(GradCheck, LayerNorm) {
  Parameter x("x", random_matrix(3, 8, rng, -2, 2)), g("g", random_matrix(1, 8, rng, 0.5, 1.5)),
      b("b", random_matrix(1, 8, rng));
  check({&x, &g, &b}, [&](Tape& t) {
    return weighted_sum(t, ops::layer_norm(t.param(x), t.param(g), t.param(b)), 14);
  });
}

TEST_F(GradCheck, StructuralOps) {
  Parameter table("table", random_matrix(6, 4, rng)), a("a", random_matrix(3, 4, rng)),
      b("b", random_matrix(3, 2, rng)), c("c", random_matrix(2, 4, rng));
  const std::vector<int> ids{1, 4, 1, 0};
  check({&table}, [&](Tape& t) { return weighted_sum(t, ops::embedding(t.param(table), ids), 15); });
  check({&a, &b}, [&](Tape& t) {
    const Var parts[] = {t.param(a), t.param(b)};
    return weighted_sum(t, ops::concat_cols(parts), 16);
  });
  check({&a, &c}, [&](Tape& t) {
    const Var parts[] = {t.param(a), t.param(c)};
    return weighted_sum(t, ops::concat_rows(parts), 17);
  });
  check({&a}, [&](Tape& t) { return weighted_sum(t, ops::slice_cols(t.param(a), 1, 3), 18); });
  const std::vector<std::size_t> rows{2, 0, 2};
  check({&a}, [&](Tape& t) { return weighted_sum(t, ops::select_rows(t.param(a), rows), 19); });
  check({&a}, [&](Tape& t) { return weighted_sum(t, ops::mean_rows(t.param(a)), 20); });
}

TEST_F(GradCheck, DropoutWithFixedMask) {
  Parameter a("a", random_matrix(4, 5, rng));
  check({&a}, [&](Tape& t) {
    std::mt19937_64 mask_rng(5);
    return weighted_sum(t, ops::dropout(t.param(a), 0.3, mask_rng), 21);
  });
}

TEST_F(GradCheck, AttentionComposite) {
  Parameter q("q", random_matrix(4, 6, rng)), k("k", random_matrix(4, 6, rng)),
      v("v", random_matrix(4, 6, rng)), w("w", random_matrix(6, 6, rng));
  check({&q, &k, &v, &w}, [&](Tape& t) {
    const Var scores = ops::scale(ops::matmul_nt(ops::matmul(t.param(q), t.param(w)), t.param(k)),
                                  1.0 / std::sqrt(6.0));
    const Var attn = ops::softmax(ops::causal_mask(scores));
    return weighted_sum(t, ops::matmul(attn, t.param(v)), 22);
  });
}

TEST(Masking, MaskedScoresGetExactlyZeroGradient) {
  std::mt19937_64 rng(6);
  Parameter scores("s", random_matrix(5, 5, rng));
  Parameter values("v", random_matrix(5, 3, rng));
  Tape tape;
  const Var attn = ops::softmax(ops::causal_mask(tape.param(scores)));
  tape.backward(weighted_sum(tape, ops::matmul(attn, tape.param(values)), 30));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      if (j > i) {
        EXPECT_EQ(scores.grad(i, j), 0.0);
        EXPECT_EQ(attn.value()(i, j), 0.0);
      } else if (i > 0) {  // row 0 attends to a single position
        EXPECT_NE(scores.grad(i, j), 0.0) << i << "," << j;
      }
    }
  }
}

TEST(CrossEntropy, FusedMatchesUnfused) {
  std::mt19937_64 rng(7);
  const auto logits = random_matrix(6, 11, rng, -8, 8);
  const std::vector<int> targets{0, 10, 3, 3, 7, 1};
  Tape tape(false);
  const Var x = tape.constant(logits);
  const double fused = ops::cross_entropy_sum(x, targets).scalar();
  const Var logp = ops::log(ops::softmax(x));
  double unfused = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) unfused -= logp.value()(r, static_cast<std::size_t>(targets[r]));
  EXPECT_NEAR(fused, unfused, 1e-10);
}

TEST(Determinism, SameInputsGiveBitIdenticalValuesAndGrads) {
  auto run = [] {
    std::mt19937_64 rng(8);
    Parameter a("a", random_matrix(4, 4, rng)), g("g", Matrix(1, 4, 1.0)), b("b", Matrix(1, 4));
    Tape tape;
    std::mt19937_64 drop(9);
    const Var h = ops::layer_norm(ops::dropout(tape.param(a), 0.2, drop), tape.param(g), tape.param(b));
    const Var loss = weighted_sum(tape, ops::softmax(ops::causal_mask(ops::matmul_nt(h, h))), 3);
    tape.backward(loss);
    std::vector<double> out{loss.scalar()};
    out.insert(out.end(), a.grad.data.begin(), a.grad.data.end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(NonRecordingTape, ComputesSameValues) {
  std::mt19937_64 rng(10);
  Parameter a("a", random_matrix(3, 3, rng));
  Tape rec, plain(false);
  const double x = weighted_sum(rec, ops::softmax(rec.param(a)), 1).scalar();
  const double y = weighted_sum(plain, ops::softmax(plain.param(a)), 1).scalar();
  EXPECT_EQ(x, y);
  EXPECT_FALSE(plain.recording());
}

double step_quadratic(Parameter& w, const Matrix& target, const Matrix& curvature) {
  double loss = 0;
  for (std::size_t i = 0; i < w.value.size(); ++i) {
    const double d = w.value.data[i] - target.data[i];
    loss += curvature.data[i] * d * d;
    w.grad.data[i] = 2 * curvature.data[i] * d;
  }
  return loss;
}

TEST(Adam, SingleStepDescends) {
  Parameter w("w", Matrix(1, 1, {1.0}));
  w.grad.data[0] = 2.0;  // d/dw of w^2 at 1
  Parameter* ps[] = {&w};
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(ps, state, cfg);
  EXPECT_LT(w.value.data[0], 1.0);
  EXPECT_NEAR(w.value.data[0], 0.9, 1e-6);  // first step moves by lr
}

TEST(Adam, ConvergesOnConvexQuadratic) {
  std::mt19937_64 rng(11);
  const auto target = random_matrix(1, 10, rng, -2, 2);
  const auto curvature = random_matrix(1, 10, rng, 0.5, 3.0);
  Parameter w("w", random_matrix(1, 10, rng, -2, 2));
  Parameter* ps[] = {&w};
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 0.05;
  double loss = 0;
  for (int step = 0; step < 200; ++step) {
    step_quadratic(w, target, curvature);
    adam_step(ps, state, cfg);
  }
  loss = step_quadratic(w, target, curvature);
  EXPECT_LT(loss, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::mt19937_64 rng(12);
  Parameter w("w", random_matrix(3, 3, rng));
  const Matrix before = w.value;
  Parameter* ps[] = {&w};
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(ps, state, AdamConfig{});
  expect_near(w.value, before, 1e-12);
}

TEST(Adam, ClipsGlobalNorm) {
  Parameter a("a", Matrix(1, 2)), b("b", Matrix(1, 1));
  a.grad = Matrix(1, 2, {3.0, 0.0});
  b.grad = Matrix(1, 1, {4.0});
  Parameter* ps[] = {&a, &b};
  EXPECT_DOUBLE_EQ(global_grad_norm(ps), 5.0);
  AdamState clipped, plain;
  AdamConfig cfg;
  cfg.clip_norm = 1.0;
  adam_step(ps, clipped, cfg);
  EXPECT_NEAR(clipped.m[1].data[0], 0.1 * 4.0 / 5.0, 1e-15);
  Parameter c("c", Matrix(1, 1));
  c.grad = Matrix(1, 1, {4.0});
  Parameter* one[] = {&c};
  adam_step(one, plain, AdamConfig{});
  EXPECT_NEAR(plain.m[0].data[0], 0.4, 1e-15);
}

TEST(Adam, DeterministicUpdates) {
  auto run = [] {
    std::mt19937_64 rng(13);
    const auto target = random_matrix(1, 6, rng);
    const auto curvature = random_matrix(1, 6, rng, 0.5, 2);
    Parameter w("w", random_matrix(1, 6, rng));
    Parameter* ps[] = {&w};
    AdamState st;
    for (int i = 0; i < 50; ++i) {
      step_quadratic(w, target, curvature);
      adam_step(ps, st, AdamConfig{});
    }
    return w.value.data;
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripsBitExactly) {
  std::mt19937_64 rng(14);
  Checkpoint ck;
  ck.config = {{"d_model", "16"}, {"dropout", "0.1"}};
  ck.vocab = {"[PAD]", "[UNK]", "word"};
  ck.params = {{"enc.w", random_matrix(3, 5, rng)}, {"dec.b", random_matrix(1, 7, rng)}};
  ck.params[0].second.data[2] = -0.0;
  ck.params[0].second.data[3] = 1e-300;
  const auto path = (std::filesystem::temp_directory_path() / "kbqa_tensor_test.ckpt").string();
  write_checkpoint(path, ck);
  const auto back = read_checkpoint(path);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.vocab, ck.vocab);
  ASSERT_EQ(back.params.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.params[i].first, ck.params[i].first);
    EXPECT_EQ(back.params[i].second.rows, ck.params[i].second.rows);
    EXPECT_EQ(back.params[i].second.data, ck.params[i].second.data);
  }
  EXPECT_TRUE(std::signbit(back.params[0].second.data[2]));
  ASSERT_NE(back.config_value("dropout"), nullptr);
  EXPECT_EQ(*back.config_value("dropout"), "0.1");
  EXPECT_EQ(back.config_value("missing"), nullptr);

  // Header starts with a magic line and the format version.
  std::ifstream in(path, std::ios::binary);
  std::string magic, version;
  std::getline(in, magic);
  std::getline(in, version);
  EXPECT_EQ(version, "format_version=1");
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto bad = (dir / "kbqa_bad.ckpt").string();
  std::ofstream(bad) << "not a checkpoint\n";
  EXPECT_THROW(read_checkpoint(bad), DataError);

  Checkpoint ck;
  ck.params = {{"w", Matrix(4, 4, 1.0)}};
  const auto good = (dir / "kbqa_trunc.ckpt").string();
  write_checkpoint(good, ck);
  const auto size = std::filesystem::file_size(good);
  std::filesystem::resize_file(good, size - 8);
  EXPECT_THROW(read_checkpoint(good), DataError);
  EXPECT_THROW(read_checkpoint((dir / "kbqa_does_not_exist.ckpt").string()), DataError);
  std::filesystem::remove(bad);
  std::filesystem::remove(good);
}

}  // namespace
}  // namespace kbqa
