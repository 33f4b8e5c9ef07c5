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

#ifndef KBQA_TEXT_HPP_
#define KBQA_TEXT_HPP_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kbqa/ids.hpp"

namespace kbqa {

// Lowercases and splits on whitespace; every punctuation character becomes
// its own token. Letters and digits (and any non-ASCII bytes) group together.
std::vector<std::string> tokenize(std::string_view text);

// Lowercase, punctuation replaced by spaces, whitespace collapsed and trimmed.
// Used for entity labels and relation surface forms.
std::string normalize_label(std::string_view text);

// Closed word vocabulary shared by the question and relation encoders.
class TokenVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kReserved = 4;

  TokenVocab();

  // Tokens are sorted lexicographically before indexing so the same corpus
  // always yields the same ids.
  static TokenVocab build(std::span<const std::vector<std::string>> corpora);
  static TokenVocab from_tokens(std::span<const std::string> ordered);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // [CLS] ids... [SEP]; unknown words map to kUnk.
  std::vector<int> encode(std::span<const std::string> words) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Derives a surface form from a relation IRI: the last segment after any of
// '/', '#', ':' or '.', with '_' and camelCase boundaries split into words.
std::string surface_from_iri(std::string_view iri);

// Many-to-one mapping between KG relations and their textual surface forms.
class RelationCatalog {
 public:
  RelationCatalog() = default;

  // relation_iris is indexed by RelationId. labels maps IRI -> explicit label
  // and takes precedence over IRI-derived surfaces.
  static RelationCatalog build(
      std::span<const std::string> relation_iris,
      const std::unordered_map<std::string, std::string>& labels = {});

  std::size_t surface_count() const { return surfaces_.size(); }
  std::size_t relation_count() const { return relation_iris_.size(); }
  const std::vector<std::string>& surfaces() const { return surfaces_; }
  const std::string& surface(std::size_t index) const { return surfaces_.at(index); }
  const std::vector<RelationId>& relations_of(std::size_t surface) const {
    return surface_to_relations_.at(surface);
  }
  std::size_t surface_of(RelationId relation) const {
    return relation_to_surface_.at(relation.value);
  }
  const std::string& relation_iri(RelationId relation) const {
    return relation_iris_.at(relation.value);
  }
  std::optional<RelationId> find_relation(std::string_view iri) const;
  // Matches normalize_label(surface) against the catalog.
  std::optional<std::size_t> find_surface(std::string_view surface) const;

  // "surface \t relation_iri" lines, sorted by surface then RelationId.
  std::string export_tsv() const;

 private:
  std::vector<std::string> relation_iris_;
  std::unordered_map<std::string, RelationId> iri_index_;
  std::vector<std::string> surfaces_;
  std::vector<std::vector<RelationId>> surface_to_relations_;
  std::vector<std::size_t> relation_to_surface_;
};

// Reads a "relation_iri \t surface" file.
std::unordered_map<std::string, std::string> read_relation_labels(
    const std::string& path);

}  // namespace kbqa

#endif  // KBQA_TEXT_HPP_
