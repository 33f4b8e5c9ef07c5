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

#ifndef KBQA_KG_STORE_HPP_
#define KBQA_KG_STORE_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kbqa/ids.hpp"

namespace kbqa {

struct Triple {
  EntityId subject;
  RelationId predicate;
  EntityId object;
  auto operator<=>(const Triple&) const = default;
};

// Unbound positions are wildcards.
struct TriplePattern {
  std::optional<EntityId> subject;
  std::optional<RelationId> predicate;
  std::optional<EntityId> object;

  bool matches(const Triple& t) const {
    return (!subject || *subject == t.subject) &&
           (!predicate || *predicate == t.predicate) &&
           (!object || *object == t.object);
  }
};

struct Entity {
  std::string iri;
  std::string label;
};

// Half-open token range [begin, end) over tokenize(question).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  auto operator<=>(const TokenSpan&) const = default;
};

// One linked mention. Several entities share a mention when their labels
// collide; they are kept in ascending id order.
struct EntityMention {
  TokenSpan span;
  std::vector<EntityId> entities;
  double score = 0.0;
};

class KnowledgeGraph {
 public:
  static constexpr double kFuzzyThreshold = 0.5;

  KnowledgeGraph() = default;

  // Deduplicates triples and builds every index. Ids in triples must be valid.
  static KnowledgeGraph build(std::vector<Entity> entities,
                              std::vector<std::string> relation_iris,
                              std::vector<Triple> triples);

  std::size_t entity_count() const { return entities_.size(); }
  std::size_t relation_count() const { return relation_iris_.size(); }
  std::size_t triple_count() const { return spo_.size(); }

  const Entity& entity(EntityId id) const { return entities_.at(id.value); }
  const std::string& relation_iri(RelationId id) const {
    return relation_iris_.at(id.value);
  }
  const std::vector<std::string>& relation_iris() const { return relation_iris_; }
  std::optional<EntityId> find_entity(std::string_view iri) const;
  std::optional<RelationId> find_relation(std::string_view iri) const;

  // All triples in (subject, predicate, object) order.
  std::span<const Triple> triples() const { return spo_; }

  // Exactly the matching triples, sorted by (subject, predicate, object).
  std::vector<Triple> match(const TriplePattern& pattern) const;

  // Index range covering every match of the pattern. It may contain
  // non-matching triples when more than one position is bound, so callers
  // filter with TriplePattern::matches. Its size is the selectivity estimate.
  std::span<const Triple> candidates(const TriplePattern& pattern) const;

  // Entities whose normalized label equals normalize_label(label).
  std::vector<EntityId> entities_with_label(std::string_view label) const;

  // Greedy label matcher over tokenize(question). Exact normalized matches
  // are taken longest span first (score 1); the remaining tokens are matched
  // against labels by character-trigram Jaccard, best score first, keeping
  // scores >= kFuzzyThreshold. Result is ordered by span start.
  std::vector<EntityMention> link_entities(std::string_view question) const;

  std::string triples_tsv() const;
  std::string labels_tsv() const;

 private:
  std::vector<Entity> entities_;
  std::vector<std::string> relation_iris_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;

  std::vector<Triple> spo_;
  std::vector<Triple> pso_;
  std::vector<Triple> pos_;
  std::vector<Triple> osp_;

  std::unordered_map<std::string, std::vector<EntityId>> label_index_;
  std::vector<std::string> label_keys_;
  std::vector<std::vector<std::uint32_t>> label_trigrams_;
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> trigram_postings_;
  std::size_t max_label_tokens_ = 0;
};

// Sorted, deduplicated character trigrams of " " + text + " ".
std::vector<std::uint32_t> char_trigrams(std::string_view text);
double trigram_jaccard(std::string_view a, std::string_view b);

struct KgLoadResult {
  KnowledgeGraph kg;
  // Entities referenced by triples but absent from the label file.
  std::size_t unlabeled_entities = 0;
};

// Triples TSV: subject \t predicate \t object. Labels TSV: entity \t label.
// '#' lines are comments. Throws DataError with the offending line number.
KgLoadResult load_kg(const std::string& triples_path, const std::string& labels_path);

}  // namespace kbqa

#endif  // KBQA_KG_STORE_HPP_
