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

#ifndef KBQA_DATA_HPP_
#define KBQA_DATA_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbqa/kg_store.hpp"
#include "kbqa/parser_model.hpp"
#include "kbqa/text.hpp"

namespace kbqa {

// One question with its gold query. answers holds entity IRIs for SELECT,
// "true"/"false" for ASK and the decimal count for COUNT.
struct DatasetRecord {
  std::string question;
  std::string sparql;
  std::vector<std::string> entity_order;
  std::vector<std::string> answers;
  std::string path_signature;
  std::string split;  // empty when absent

  bool operator==(const DatasetRecord&) const = default;
};

std::string record_to_json(const DatasetRecord& record);
// Throws DataError (with line number when given) on malformed input or
// unexpected fields.
DatasetRecord record_from_json(const std::string& line, std::size_t lineno = 0);
std::vector<DatasetRecord> read_dataset(const std::string& path);
void write_dataset(const std::string& path, std::span<const DatasetRecord> records);

// "1-hop", "2-hop", "3-hop", "ask" or "count".
std::string record_category(const DatasetRecord& record);

// Writes to path + ".tmp" and renames over path.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// ---------------------------------------------------------------------------
// Knowledge graphs on disk

struct KgBundle {
  KnowledgeGraph kg;
  RelationCatalog catalog;
  std::size_t unlabeled_entities = 0;
};

// Reads triples.tsv, labels.tsv and (when present) relations.tsv from dir.
KgBundle load_kg_dir(const std::string& dir);
// catalog_path overrides dir/relations.tsv.
KgBundle load_kg_files(const std::string& triples, const std::string& labels,
                       const std::optional<std::string>& relation_labels);

// ---------------------------------------------------------------------------
// Synthetic movie KGs

enum class KgProfile { kMovieA, kMovieB };
KgProfile parse_profile(const std::string& name);
std::string profile_name(KgProfile profile);

// The nine semantic relations, in a fixed order shared by both profiles.
const std::vector<std::string>& semantic_relations();

struct KgSizeParams {
  int movies = 150;
  int directors = 50;
  int writers = 50;
  int actors = 120;
};

struct GeneratedKg {
  KgProfile profile = KgProfile::kMovieA;
  std::vector<Entity> entities;
  std::vector<std::string> relation_iris;               // indexed like semantic_relations()
  std::unordered_map<std::string, std::string> relation_labels;  // empty for movie-A
  std::vector<Triple> triples;
  // Entity ids grouped by type: "movie", "director", "actor", "writer",
  // "language", "genre", "year", "tag", "rating", "votes".
  std::map<std::string, std::vector<EntityId>> by_type;

  KnowledgeGraph build_kg() const;
  RelationCatalog build_catalog() const;
};

GeneratedKg gen_kg(KgProfile profile, std::uint64_t seed, const KgSizeParams& params = {});
// Writes triples.tsv, labels.tsv, relations.tsv and manifest.json into dir.
void write_kg(const std::string& dir, const GeneratedKg& kg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Question generation

struct QuestionCounts {
  int one_hop = 40;    // per relation and direction
  int two_hop = 15;    // per path signature
  int three_hop = 20;  // per path signature
  int ask = 25;        // per relation and phrasing order
  int count = 25;      // per relation
};

// Template-generated records whose gold query was executed on kg and whose
// entity mentions are recovered by the linker. Question texts are unique.
std::vector<DatasetRecord> gen_questions(const GeneratedKg& gen, std::uint64_t seed,
                                         const QuestionCounts& counts = {});

// Shuffles and labels records train/valid/test with the given fractions.
void assign_splits(std::vector<DatasetRecord>& records, double train, double valid,
                   std::uint64_t seed);
std::vector<DatasetRecord> filter_split(std::span<const DatasetRecord> records,
                                        const std::string& split);
std::vector<DatasetRecord> filter_category(std::span<const DatasetRecord> records,
                                           const std::string& category);

// Relations named in a path signature ("a>b" -> {a, b}).
std::vector<std::string> signature_relations(const std::string& signature);

struct UnseenSplit {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> seen_dev;
  std::vector<DatasetRecord> unseen_dev;
};

// Records with an excluded signature go to unseen_dev; the rest are split
// into train and seen_dev (dev_fraction). Throws CoverageViolation when a
// relation of an excluded signature would be missing from train, and
// DataError when an excluded signature never occurs.
UnseenSplit make_unseen_split(std::span<const DatasetRecord> records,
                              std::span<const std::string> excluded, double dev_fraction,
                              std::uint64_t seed);

// Word-token vocabulary of the questions.
std::vector<std::string> question_vocabulary(std::span<const DatasetRecord> records);
// |A ∩ B| / |A ∪ B| of the two question vocabularies.
double vocabulary_overlap(std::span<const DatasetRecord> a, std::span<const DatasetRecord> b);

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessResult {
  std::vector<TrainingExample> examples;
  std::vector<std::size_t> kept;  // record index of each example
  std::map<std::string, std::size_t> rejected;  // reason -> count
  std::size_t rejected_total() const;
};

PreprocessResult preprocess(std::span<const DatasetRecord> records,
                            const RelationCatalog& catalog, const TokenVocab& vocab,
                            const ModelConfig& limits);

// Question words plus catalog surfaces, ready for TokenVocab::build.
std::vector<std::vector<std::string>> vocabulary_corpus(
    std::span<const DatasetRecord> records, std::span<const RelationCatalog* const> catalogs);

}  // namespace kbqa

#endif  // KBQA_DATA_HPP_
