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

#include "kbqa/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "kbqa/error.hpp"

namespace kbqa {
namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;
}

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

char lower(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(lower(ch));
    } else if (is_space(c)) {
      flush();
    } else {
      flush();
      tokens.emplace_back(1, ch);
    }
  }
  flush();
  return tokens;
}

std::string normalize_label(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(lower(ch));
    } else {
      pending_space = true;
    }
  }
  return out;
}

TokenVocab::TokenVocab() {
  for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

TokenVocab TokenVocab::build(std::span<const std::vector<std::string>> corpora) {
  std::set<std::string> unique;
  for (const auto& words : corpora) unique.insert(words.begin(), words.end());
  TokenVocab vocab;
  for (const auto& w : unique) {
    if (vocab.index_.contains(w)) continue;
    vocab.index_.emplace(w, static_cast<int>(vocab.tokens_.size()));
    vocab.tokens_.push_back(w);
  }
  return vocab;
}

TokenVocab TokenVocab::from_tokens(std::span<const std::string> ordered) {
  TokenVocab vocab;
  if (ordered.size() < kReserved) throw DataError("vocabulary misses reserved tokens");
  for (int i = 0; i < kReserved; ++i) {
    if (ordered[i] != vocab.tokens_[i]) throw DataError("vocabulary reserved token mismatch");
  }
  for (std::size_t i = kReserved; i < ordered.size(); ++i) {
    if (!vocab.index_.emplace(ordered[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token '" + ordered[i] + "'");
    }
    vocab.tokens_.push_back(ordered[i]);
  }
  return vocab;
}

int TokenVocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> TokenVocab::encode(std::span<const std::string> words) const {
  std::vector<int> ids;
  ids.reserve(words.size() + 2);
  ids.push_back(kCls);
  for (const auto& w : words) ids.push_back(id(w));
  ids.push_back(kSep);
  return ids;
}

std::string surface_from_iri(std::string_view iri) {
  const auto cut = iri.find_last_of("/#:.");
  std::string_view tail = cut == std::string_view::npos ? iri : iri.substr(cut + 1);
  std::string spaced;
  for (std::size_t i = 0; i < tail.size(); ++i) {
    const auto c = static_cast<unsigned char>(tail[i]);
    if (tail[i] == '_' || tail[i] == '-') {
      spaced.push_back(' ');
      continue;
    }
    if (std::isupper(c) && i > 0) {
      const auto prev = static_cast<unsigned char>(tail[i - 1]);
      const bool next_lower =
          i + 1 < tail.size() && std::islower(static_cast<unsigned char>(tail[i + 1]));
      if (std::islower(prev) || std::isdigit(prev) || (std::isupper(prev) && next_lower)) {
        spaced.push_back(' ');
      }
    }
    spaced.push_back(tail[i]);
  }
  return normalize_label(spaced);
}

RelationCatalog RelationCatalog::build(
    std::span<const std::string> relation_iris,
    const std::unordered_map<std::string, std::string>& labels) {
  RelationCatalog cat;
  cat.relation_iris_.assign(relation_iris.begin(), relation_iris.end());
  std::vector<std::string> derived(relation_iris.size());
  std::set<std::string> unique;
  for (std::size_t r = 0; r < relation_iris.size(); ++r) {
    const auto& iri = relation_iris[r];
    if (!cat.iri_index_.emplace(iri, RelationId{static_cast<std::uint32_t>(r)}).second) {
      throw DataError("duplicate relation IRI " + iri);
    }
    auto label = labels.find(iri);
    derived[r] = label != labels.end() ? normalize_label(label->second)
                                       : surface_from_iri(iri);
    if (derived[r].empty()) throw DataError("empty surface form for relation " + iri);
    unique.insert(derived[r]);
  }
  cat.surfaces_.assign(unique.begin(), unique.end());
  cat.surface_to_relations_.resize(cat.surfaces_.size());
  cat.relation_to_surface_.resize(relation_iris.size());
  for (std::size_t r = 0; r < relation_iris.size(); ++r) {
    auto it = std::lower_bound(cat.surfaces_.begin(), cat.surfaces_.end(), derived[r]);
    const auto s = static_cast<std::size_t>(it - cat.surfaces_.begin());
    cat.relation_to_surface_[r] = s;
    cat.surface_to_relations_[s].push_back(RelationId{static_cast<std::uint32_t>(r)});
  }
  return cat;
}

std::optional<RelationId> RelationCatalog::find_relation(std::string_view iri) const {
  auto it = iri_index_.find(std::string(iri));
  if (it == iri_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> RelationCatalog::find_surface(std::string_view surface) const {
  const std::string key = normalize_label(surface);
  auto it = std::lower_bound(surfaces_.begin(), surfaces_.end(), key);
  if (it == surfaces_.end() || *it != key) return std::nullopt;
  return static_cast<std::size_t>(it - surfaces_.begin());
}

std::string RelationCatalog::export_tsv() const {
  std::ostringstream out;
  for (std::size_t s = 0; s < surfaces_.size(); ++s) {
    for (RelationId r : surface_to_relations_[s]) {
      out << surfaces_[s] << '\t' << relation_iris_[r.value] << '\n';
    }
  }
  return out.str();
}

std::unordered_map<std::string, std::string> read_relation_labels(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open relation label file " + path);
  std::unordered_map<std::string, std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError("expected 'relation_iri<TAB>surface' in " + path, lineno);
    }
    labels[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return labels;
}

}  // namespace kbqa
