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

#include "kbqa/executor.hpp"

#include <algorithm>
#include <limits>
#include <optional>

#include "kbqa/kg_store.hpp"

namespace kbqa {
namespace {

class Join {
 public:
  Join(const GroundedQuery& q, const KnowledgeGraph& kg, std::vector<std::size_t> order)
      : q_(q), kg_(kg), order_(std::move(order)) {
    int vars = q.projection ? *q.projection + 1 : 0;
    for (const auto& p : q.patterns) {
      if (p.subject.is_var) vars = std::max(vars, p.subject.var + 1);
      if (p.object.is_var) vars = std::max(vars, p.object.var + 1);
    }
    bindings_.assign(static_cast<std::size_t>(vars), std::nullopt);
  }

  void run(bool stop_at_first) {
    stop_at_first_ = stop_at_first;
    solve(0);
  }

  bool found() const { return found_; }
  std::vector<EntityId>& results() { return results_; }

 private:
  std::optional<EntityId> value(const GroundedTerm& t) const {
    if (!t.is_var) return t.entity;
    return bindings_[t.var];
  }

  void solve(std::size_t step) {
    if (done_) return;
    if (step == order_.size()) {
      found_ = true;
      if (stop_at_first_) {
        done_ = true;
      } else if (q_.projection && bindings_[*q_.projection]) {
        results_.push_back(*bindings_[*q_.projection]);
      }
      return;
    }
    const auto& p = q_.patterns[order_[step]];
    const TriplePattern tp{value(p.subject), p.predicate, value(p.object)};
    const bool bind_s = p.subject.is_var && !tp.subject;
    const bool bind_o = p.object.is_var && !tp.object;
    const bool same_var = bind_s && bind_o && p.subject.var == p.object.var;
    for (const auto& t : kg_.candidates(tp)) {
      if (!tp.matches(t)) continue;
      if (same_var && t.subject != t.object) continue;
      if (bind_s) bindings_[p.subject.var] = t.subject;
      if (bind_o) bindings_[p.object.var] = t.object;
      solve(step + 1);
      if (bind_s) bindings_[p.subject.var].reset();
      if (bind_o) bindings_[p.object.var].reset();
      if (done_) return;
    }
  }

  const GroundedQuery& q_;
  const KnowledgeGraph& kg_;
  std::vector<std::size_t> order_;
  std::vector<std::optional<EntityId>> bindings_;
  std::vector<EntityId> results_;
  bool stop_at_first_ = false;
  bool found_ = false;
  bool done_ = false;
};

}  // namespace

AnswerSet AnswerSet::of_entities(std::vector<EntityId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return {Kind::kEntities, std::move(ids), false, 0};
}

bool AnswerSet::answered() const {
  switch (kind) {
    case Kind::kEntities: return !entities.empty();
    case Kind::kCount: return count > 0;
    case Kind::kBoolean: return true;
  }
  return false;
}

std::size_t AnswerSet::size() const {
  switch (kind) {
    case Kind::kEntities: return entities.size();
    case Kind::kCount: return count;
    case Kind::kBoolean: return 1;
  }
  return 0;
}

std::vector<std::size_t> plan_join_order(const GroundedQuery& q, const KnowledgeGraph& kg) {
  const std::size_t n = q.patterns.size();
  std::vector<std::size_t> selectivity(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = q.patterns[i];
    TriplePattern tp;
    if (!p.subject.is_var) tp.subject = p.subject.entity;
    tp.predicate = p.predicate;
    if (!p.object.is_var) tp.object = p.object.entity;
    selectivity[i] = kg.candidates(tp).size();
  }
  std::vector<bool> used(n, false);
  std::vector<int> bound_vars;
  auto touches_bound = [&](const GroundedPattern& p) {
    auto has = [&](const GroundedTerm& t) {
      return t.is_var &&
             std::find(bound_vars.begin(), bound_vars.end(), t.var) != bound_vars.end();
    };
    return has(p.subject) || has(p.object);
  };
  std::vector<std::size_t> order;
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = n;
    auto rank = [&](std::size_t i) {
      const bool connected = step == 0 || touches_bound(q.patterns[i]);
      return std::pair{connected ? 0 : 1, selectivity[i]};
    };
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      if (best == n || rank(i) < rank(best)) best = i;
    }
    used[best] = true;
    order.push_back(best);
    for (const auto* t : {&q.patterns[best].subject, &q.patterns[best].object}) {
      if (t->is_var) bound_vars.push_back(t->var);
    }
  }
  return order;
}

AnswerSet execute(const GroundedQuery& q, const KnowledgeGraph& kg) {
  Join join(q, kg, plan_join_order(q, kg));
  switch (q.form) {
    case QueryForm::kAsk:
      join.run(true);
      return AnswerSet::of_boolean(join.found());
    case QueryForm::kSelect:
      join.run(false);
      return AnswerSet::of_entities(std::move(join.results()));
    case QueryForm::kCount: {
      join.run(false);
      return AnswerSet::of_count(AnswerSet::of_entities(std::move(join.results())).entities.size());
    }
  }
  return {};
}

}  // namespace kbqa
