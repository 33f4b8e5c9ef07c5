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

#ifndef KBQA_OPTIMIZER_HPP_
#define KBQA_OPTIMIZER_HPP_

#include <span>
#include <vector>

#include "kbqa/autodiff.hpp"

namespace kbqa {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Rescale gradients whose global L2 norm exceeds this; <= 0 disables.
  double clip_norm = 0.0;
};

// First and second moment estimates, one pair per parameter in step order.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

// One bias-corrected adaptive-moment update from Parameter::grad. Gradients
// are left in place; callers zero them before the next accumulation.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config);

double global_grad_norm(std::span<Parameter* const> params);

}  // namespace kbqa

#endif  // KBQA_OPTIMIZER_HPP_
