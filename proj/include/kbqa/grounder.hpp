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

#ifndef KBQA_GROUNDER_HPP_
#define KBQA_GROUNDER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kbqa/executor.hpp"
#include "kbqa/kg_store.hpp"
#include "kbqa/parser_model.hpp"
#include "kbqa/query_ir.hpp"
#include "kbqa/text.hpp"

namespace kbqa {

struct GroundingContext {
  const KnowledgeGraph* kg = nullptr;
  const RelationCatalog* catalog = nullptr;
  std::vector<EntityMention> mentions;  // ordered by span start
};

GroundingContext make_context(const KnowledgeGraph& kg, const RelationCatalog& catalog,
                              std::string_view question);

struct EntityBinding {
  std::vector<EntityId> entities;  // per ENT index
  double score = 1.0;              // product of linker scores
};

// Mention i binds ENT_i. Ambiguous mentions expand into combinations ordered
// by descending score, ties by ascending EntityId tuple. Throws
// NotEnoughEntities.
std::vector<EntityBinding> bind_entities(const QuerySkeleton& skeleton,
                                         std::span<const EntityMention> mentions,
                                         std::size_t cap = 8);

struct RelationAssignment {
  std::vector<RelationId> relations;  // per PROP index
  double score = 0.0;
};

// Cross product over the relations each chosen surface maps to, in ascending
// RelationId tuple order. Every assignment inherits candidate.joint_score.
std::vector<RelationAssignment> expand_relations(const SketchCandidate& candidate,
                                                 const RelationCatalog& catalog);

struct GrounderConfig {
  std::size_t entity_combination_cap = 8;
  // Execute every candidate so the trace carries all result sizes. Otherwise
  // execution stops at the selected candidate.
  bool execute_all = false;
};

struct CandidateRecord {
  GroundedQuery query;
  bool executed = false;
  AnswerSet result;
};

struct GroundingOutcome {
  AnswerSet answer;
  std::optional<std::size_t> chosen;  // index into candidates
  // Every SELECT/COUNT candidate came back empty; answer holds the top
  // candidate's empty result.
  bool flagged_empty = false;
  // No candidate could be formed (parse, entity, or length failure).
  bool unanswered = false;
  std::string failure;
  std::vector<CandidateRecord> candidates;

  const GroundedQuery* chosen_query() const {
    return chosen ? &candidates[*chosen].query : nullptr;
  }
};

// Grounds sketch candidates into executable queries ordered by descending
// score; ties keep sketch order, then binding order, then relation order.
// Sketches whose entity placeholders cannot be bound are skipped. The list is
// truncated to candidate_cap times the largest per-sketch relation fan-out.
std::vector<GroundedQuery> ground_candidates(std::span<const SketchCandidate> sketches,
                                             const GroundingContext& ctx,
                                             std::size_t candidate_cap,
                                             std::size_t entity_cap = 8);

// Walks ordered candidates: the first ASK reached returns its boolean; the
// first SELECT/COUNT with a non-empty result wins; if none, the top
// candidate's empty result is returned with flagged_empty set.
GroundingOutcome select_answer(std::vector<GroundedQuery> ordered, const KnowledgeGraph& kg,
                               bool execute_all = false);

// Full stage-2 pipeline for one question. Failures become unanswered outcomes.
GroundingOutcome answer(std::string_view question, const ParserModel& model,
                        const RelationMatrix& relations, const GroundingContext& ctx,
                        const GrounderConfig& config = {});

// Human-readable answer strings: entity IRIs, "true"/"false", or the count.
std::vector<std::string> answer_strings(const AnswerSet& answer, const KnowledgeGraph& kg);
std::vector<std::string> answer_labels(const AnswerSet& answer, const KnowledgeGraph& kg);

// One JSON object (single line) describing the question's candidates.
std::string trace_json(std::string_view question, const GroundingOutcome& outcome,
                       const KnowledgeGraph& kg, const RelationCatalog& catalog);

}  // namespace kbqa

#endif  // KBQA_GROUNDER_HPP_
