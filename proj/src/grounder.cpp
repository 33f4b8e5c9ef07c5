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

#include "kbqa/grounder.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "kbqa/error.hpp"

namespace kbqa {

GroundingContext make_context(const KnowledgeGraph& kg, const RelationCatalog& catalog,
                              std::string_view question) {
  return {&kg, &catalog, kg.link_entities(question)};
}

std::vector<EntityBinding> bind_entities(const QuerySkeleton& skeleton,
                                         std::span<const EntityMention> mentions,
                                         std::size_t cap) {
  const auto needed = static_cast<std::size_t>(skeleton.entity_count());
  if (mentions.size() < needed) throw NotEnoughEntities(needed, mentions.size());
  std::vector<EntityBinding> all{EntityBinding{}};
  for (std::size_t i = 0; i < needed; ++i) {
    std::vector<EntityBinding> next;
    for (const auto& b : all) {
      for (EntityId e : mentions[i].entities) {
        EntityBinding nb = b;
        nb.entities.push_back(e);
        nb.score *= mentions[i].score;
        next.push_back(std::move(nb));
      }
    }
    all = std::move(next);
  }
  std::stable_sort(all.begin(), all.end(), [](const EntityBinding& a, const EntityBinding& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entities < b.entities;
  });
  if (all.size() > cap) all.resize(cap);
  return all;
}

std::vector<RelationAssignment> expand_relations(const SketchCandidate& candidate,
                                                 const RelationCatalog& catalog) {
  std::vector<RelationAssignment> out{RelationAssignment{{}, candidate.joint_score}};
  for (std::size_t surface : candidate.chosen) {
    const auto& rels = catalog.relations_of(surface);
    std::vector<RelationAssignment> next;
    next.reserve(out.size() * rels.size());
    for (const auto& a : out) {
      for (RelationId r : rels) {
        RelationAssignment na = a;
        na.relations.push_back(r);
        next.push_back(std::move(na));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::vector<GroundedQuery> ground_candidates(std::span<const SketchCandidate> sketches,
                                             const GroundingContext& ctx,
                                             std::size_t candidate_cap, std::size_t entity_cap) {
  std::vector<GroundedQuery> out;
  std::size_t max_fanout = 1;
  for (const auto& sketch : sketches) {
    std::vector<EntityBinding> bindings;
    try {
      bindings = bind_entities(sketch.skeleton, ctx.mentions, entity_cap);
    } catch (const NotEnoughEntities&) {
      continue;
    }
    const auto assignments = expand_relations(sketch, *ctx.catalog);
    max_fanout = std::max(max_fanout, assignments.size());
    for (const auto& b : bindings) {
      for (const auto& a : assignments) {
        GroundedQuery q = ground(sketch.skeleton, b.entities, a.relations);
        q.provenance.surfaces = sketch.chosen;
        q.score = a.score * b.score;
        out.push_back(std::move(q));
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const GroundedQuery& a, const GroundedQuery& b) { return a.score > b.score; });
  const std::size_t limit = candidate_cap * max_fanout;
  if (out.size() > limit) out.resize(limit);
  return out;
}

GroundingOutcome select_answer(std::vector<GroundedQuery> ordered, const KnowledgeGraph& kg,
                               bool execute_all) {
  GroundingOutcome out;
  if (ordered.empty()) {
    out.unanswered = true;
    out.failure = "no groundable candidate";
    return out;
  }
  out.candidates.reserve(ordered.size());
  for (auto& q : ordered) out.candidates.push_back({std::move(q), false, {}});
  auto run = [&](std::size_t i) -> const AnswerSet& {
    auto& c = out.candidates[i];
    if (!c.executed) {
      c.result = execute(c.query, kg);
      c.executed = true;
    }
    return c.result;
  };
  for (std::size_t i = 0; i < out.candidates.size(); ++i) {
    const AnswerSet& r = run(i);
    if (out.candidates[i].query.form == QueryForm::kAsk || r.answered()) {
      out.chosen = i;
      out.answer = r;
      break;
    }
  }
  if (!out.chosen) {
    out.chosen = 0;
    out.answer = out.candidates[0].result;
    out.flagged_empty = true;
  }
  if (execute_all) {
    for (std::size_t i = 0; i < out.candidates.size(); ++i) run(i);
  }
  return out;
}

GroundingOutcome answer(std::string_view question, const ParserModel& model,
                        const RelationMatrix& relations, const GroundingContext& ctx,
                        const GrounderConfig& config) {
  std::vector<SketchCandidate> sketches;
  try {
    sketches = model.infer(std::string(question), relations);
  } catch (const Error& e) {
    GroundingOutcome out;
    out.unanswered = true;
    out.failure = e.what();
    return out;
  }
  auto grounded = ground_candidates(sketches, ctx,
                                    static_cast<std::size_t>(model.config().candidate_cap),
                                    config.entity_combination_cap);
  if (grounded.empty()) {
    GroundingOutcome out;
    out.unanswered = true;
    std::size_t needed = 0;
    for (const auto& s : sketches) {
      needed = std::max(needed, static_cast<std::size_t>(s.skeleton.entity_count()));
    }
    out.failure = NotEnoughEntities(needed, ctx.mentions.size()).what();
    return out;
  }
  return select_answer(std::move(grounded), *ctx.kg, config.execute_all);
}

std::vector<std::string> answer_strings(const AnswerSet& answer, const KnowledgeGraph& kg) {
  switch (answer.kind) {
    case AnswerSet::Kind::kBoolean:
      return {answer.boolean ? "true" : "false"};
    case AnswerSet::Kind::kCount:
      return {std::to_string(answer.count)};
    case AnswerSet::Kind::kEntities:
      break;
  }
  std::vector<std::string> out;
  out.reserve(answer.entities.size());
  for (EntityId e : answer.entities) out.push_back(kg.entity(e).iri);
  return out;
}

std::vector<std::string> answer_labels(const AnswerSet& answer, const KnowledgeGraph& kg) {
  if (answer.kind != AnswerSet::Kind::kEntities) return answer_strings(answer, kg);
  std::vector<std::string> out;
  for (EntityId e : answer.entities) {
    const auto& ent = kg.entity(e);
    out.push_back(ent.label.empty() ? ent.iri : ent.label);
  }
  return out;
}

std::string trace_json(std::string_view question, const GroundingOutcome& outcome,
                       const KnowledgeGraph& kg, const RelationCatalog& catalog) {
  using nlohmann::json;
  json cands = json::array();
  for (const auto& c : outcome.candidates) {
    json surfaces = json::array(), rels = json::array(), ents = json::array();
    for (auto s : c.query.provenance.surfaces) surfaces.push_back(catalog.surface(s));
    for (auto r : c.query.provenance.relations) rels.push_back(kg.relation_iri(r));
    for (auto e : c.query.provenance.entities) ents.push_back(kg.entity(e).iri);
    cands.push_back({{"skeleton", c.query.provenance.skeleton.to_string()},
                     {"surfaces", surfaces},
                     {"relations", rels},
                     {"entities", ents},
                     {"sparql", print_sparql(c.query, kg)},
                     {"score", c.query.score},
                     {"result_size", c.executed ? json(c.result.size()) : json(nullptr)}});
  }
  json rec{{"question", std::string(question)},
           {"candidates", cands},
           {"chosen", outcome.chosen ? json(*outcome.chosen) : json(nullptr)},
           {"answer", answer_strings(outcome.answer, kg)},
           {"flagged_empty", outcome.flagged_empty},
           {"unanswered", outcome.unanswered}};
  if (outcome.unanswered) {
    rec["answer"] = json::array();
    rec["failure"] = outcome.failure;
  }
  return rec.dump();
}

}  // namespace kbqa
