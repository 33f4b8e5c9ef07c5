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

#ifndef KBQA_QUERY_IR_HPP_
#define KBQA_QUERY_IR_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kbqa/ids.hpp"

namespace kbqa {

class KnowledgeGraph;
class RelationCatalog;

inline constexpr int kMaxPatterns = 4;
inline constexpr int kMaxVars = 4;
inline constexpr int kMaxEntities = 3;
inline constexpr int kMaxProps = 4;

// The closed decoder vocabulary: operators, variables, entity placeholders
// and relation placeholders. Its size never depends on the KG.
enum class SkelTok : std::uint8_t {
  kBos,
  kEos,
  kSelect,
  kAsk,
  kCount,
  kOpen,
  kClose,
  kDot,
  kFilterReserved,
  kVar0,
  kVar1,
  kVar2,
  kVar3,
  kEnt0,
  kEnt1,
  kEnt2,
  kProp0,
  kProp1,
  kProp2,
  kProp3,
};

inline constexpr std::size_t kSkeletonVocabSize = 20;

std::string_view token_name(SkelTok tok);
std::optional<SkelTok> token_from_name(std::string_view name);

inline SkelTok var_token(int k) { return static_cast<SkelTok>(static_cast<int>(SkelTok::kVar0) + k); }
inline SkelTok ent_token(int k) { return static_cast<SkelTok>(static_cast<int>(SkelTok::kEnt0) + k); }
inline SkelTok prop_token(int k) { return static_cast<SkelTok>(static_cast<int>(SkelTok::kProp0) + k); }
inline bool is_prop(SkelTok t) { return t >= SkelTok::kProp0 && t <= SkelTok::kProp3; }
inline int prop_index(SkelTok t) { return static_cast<int>(t) - static_cast<int>(SkelTok::kProp0); }

enum class QueryForm { kSelect, kAsk, kCount };

struct Term {
  enum class Kind : std::uint8_t { kVar, kEnt };
  Kind kind = Kind::kVar;
  int index = 0;

  static Term var(int k) { return {Kind::kVar, k}; }
  static Term ent(int k) { return {Kind::kEnt, k}; }
  bool is_var() const { return kind == Kind::kVar; }
  bool operator==(const Term&) const = default;
};

struct SkeletonPattern {
  Term subject;
  int prop = 0;
  Term object;
  bool operator==(const SkeletonPattern&) const = default;
};

// KG-agnostic query structure. Invariants (enforced by parse):
//   entity indices form {0..n-1}; relation placeholders are numbered by
//   first occurrence; variables by first occurrence reading the projection
//   then the patterns; pattern graph connected; size limits above.
struct QuerySkeleton {
  QueryForm form = QueryForm::kSelect;
  std::optional<int> projection;
  std::vector<SkeletonPattern> patterns;

  int entity_count() const;
  int prop_count() const;
  int var_count() const;
  // Readable SPARQL-like rendering with :entK / :propK / ?varK placeholders.
  std::string to_string() const;
  bool operator==(const QuerySkeleton&) const = default;
};

// BOS form [VARk] OPEN (subj PROPk obj DOT)* CLOSE EOS
std::vector<SkelTok> serialize(const QuerySkeleton& skeleton);

// Returns nullopt and sets *reason on any invariant violation.
std::optional<QuerySkeleton> try_parse(std::span<const SkelTok> tokens,
                                       std::string* reason = nullptr);
// Throws InvalidSkeleton.
QuerySkeleton parse(std::span<const SkelTok> tokens);

std::string tokens_to_string(std::span<const SkelTok> tokens);

// Parsed form of the supported SPARQL subset:
//   SELECT ?v WHERE { t* } | ASK WHERE { t* } | SELECT COUNT(?v) WHERE { t* }
//   t = term <iri> term .     term = ?name | <iri>
struct SparqlTerm {
  bool is_var = false;
  std::string text;  // variable name without '?', or IRI without brackets
  bool operator==(const SparqlTerm&) const = default;
};

struct SparqlTriple {
  SparqlTerm subject;
  std::string predicate;
  SparqlTerm object;
};

struct SparqlQuery {
  QueryForm form = QueryForm::kSelect;
  std::string projection;
  std::vector<SparqlTriple> triples;
};

// Throws UnsupportedSyntax.
SparqlQuery parse_sparql(std::string_view text);

struct CanonicalQuery {
  QuerySkeleton skeleton;
  std::vector<std::string> relation_iris;  // per PROP index
  std::vector<std::string> surfaces;       // per PROP index
};

// Maps a gold query onto a skeleton: the k-th IRI of entity_order becomes
// ENT_k, relations become PROP_k by first occurrence. Throws
// UnsupportedSyntax, UnknownEntityOrder, InvalidSkeleton, or DataError for a
// relation the catalog does not know.
CanonicalQuery canonicalize_gold(std::string_view sparql_text,
                                 std::span<const std::string> entity_order,
                                 const RelationCatalog& catalog);

struct GroundedTerm {
  bool is_var = true;
  int var = 0;
  EntityId entity;

  static GroundedTerm variable(int k) { return {true, k, {}}; }
  static GroundedTerm constant(EntityId e) { return {false, 0, e}; }
  bool operator==(const GroundedTerm&) const = default;
};

struct GroundedPattern {
  GroundedTerm subject;
  RelationId predicate;
  GroundedTerm object;
  bool operator==(const GroundedPattern&) const = default;
};

struct GroundingProvenance {
  QuerySkeleton skeleton;
  std::vector<std::size_t> surfaces;    // per PROP
  std::vector<RelationId> relations;    // per PROP
  std::vector<EntityId> entities;       // per ENT
};

// Fully KG-bound query.
struct GroundedQuery {
  QueryForm form = QueryForm::kSelect;
  std::optional<int> projection;
  std::vector<GroundedPattern> patterns;
  GroundingProvenance provenance;
  double score = 0.0;
};

// Binds every placeholder. Sizes must equal the skeleton's counts.
GroundedQuery ground(const QuerySkeleton& skeleton, std::span<const EntityId> entities,
                     std::span<const RelationId> relations);

std::string print_sparql(const GroundedQuery& query, const KnowledgeGraph& kg);

// Resolves IRIs of a parsed query against the KG; variables are numbered by
// first occurrence. Throws DataError on unknown IRIs.
GroundedQuery resolve_sparql(const SparqlQuery& query, const KnowledgeGraph& kg);

}  // namespace kbqa

#endif  // KBQA_QUERY_IR_HPP_
