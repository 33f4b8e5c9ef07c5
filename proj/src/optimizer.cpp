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

#include "kbqa/optimizer.hpp"

#include <cmath>

#include "kbqa/error.hpp"

namespace kbqa {

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (double g : p->grad.data) sq += g * g;
  }
  return std::sqrt(sq);
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.rows, p->value.cols);
      state.v.emplace_back(p->value.rows, p->value.cols);
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeMismatch("optimizer state holds " + std::to_string(state.m.size()) +
                        " slots for " + std::to_string(params.size()) + " parameters");
  }
  double g_scale = 1.0;
  if (config.clip_norm > 0.0) {
    const double norm = global_grad_norm(params);
    if (norm > config.clip_norm) g_scale = config.clip_norm / norm;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    auto& m = state.m[k].data;
    auto& v = state.v[k].data;
    if (m.size() != p.value.size()) throw ShapeMismatch("optimizer slot for " + p.name);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p.grad.data[i] * g_scale;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value.data[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

}  // namespace kbqa
