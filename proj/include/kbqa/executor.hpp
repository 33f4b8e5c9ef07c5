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

#ifndef KBQA_EXECUTOR_HPP_
#define KBQA_EXECUTOR_HPP_

#include <cstddef>
#include <vector>

#include "kbqa/ids.hpp"
#include "kbqa/query_ir.hpp"

namespace kbqa {

class KnowledgeGraph;

struct AnswerSet {
  enum class Kind { kEntities, kBoolean, kCount };

  Kind kind = Kind::kEntities;
  std::vector<EntityId> entities;  // sorted, unique
  bool boolean = false;
  std::size_t count = 0;

  static AnswerSet of_entities(std::vector<EntityId> ids);
  static AnswerSet of_boolean(bool b) { return {Kind::kBoolean, {}, b, 0}; }
  static AnswerSet of_count(std::size_t n) { return {Kind::kCount, {}, false, n}; }

  // Non-empty entity set or non-zero count. Booleans always count as answers.
  bool answered() const;
  std::size_t size() const;
  bool operator==(const AnswerSet&) const = default;
};

// Evaluates the conjunctive pattern with index nested loops, most selective
// pattern first among those connected to already-bound variables.
AnswerSet execute(const GroundedQuery& query, const KnowledgeGraph& kg);

// Join order used by execute(); exposed for tests.
std::vector<std::size_t> plan_join_order(const GroundedQuery& query, const KnowledgeGraph& kg);

}  // namespace kbqa

#endif  // KBQA_EXECUTOR_HPP_
