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

#include "kbqa/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "kbqa/error.hpp"
#include "kbqa/text.hpp"

namespace kbqa {
namespace {

struct ByPso {
  bool operator()(const Triple& a, const Triple& b) const {
    return std::tie(a.predicate, a.subject, a.object) <
           std::tie(b.predicate, b.subject, b.object);
  }
};

struct ByPos {
  bool operator()(const Triple& a, const Triple& b) const {
    return std::tie(a.predicate, a.object, a.subject) <
           std::tie(b.predicate, b.object, b.subject);
  }
};

struct ByOsp {
  bool operator()(const Triple& a, const Triple& b) const {
    return std::tie(a.object, a.subject, a.predicate) <
           std::tie(b.object, b.subject, b.predicate);
  }
};

template <typename Key, typename Proj>
std::span<const Triple> range_of(const std::vector<Triple>& sorted, Key key, Proj proj) {
  auto lo = std::partition_point(sorted.begin(), sorted.end(),
                                 [&](const Triple& t) { return proj(t) < key; });
  auto hi = std::partition_point(lo, sorted.end(),
                                 [&](const Triple& t) { return !(key < proj(t)); });
  return {lo, hi};
}

bool has_word_char(const std::string& token) {
  return std::any_of(token.begin(), token.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || u >= 0x80;
  });
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::vector<std::uint32_t> char_trigrams(std::string_view text) {
  std::string padded = " ";
  padded.append(text);
  padded.push_back(' ');
  std::vector<std::uint32_t> grams;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    grams.push_back(static_cast<std::uint32_t>(static_cast<unsigned char>(padded[i])) << 16 |
                    static_cast<std::uint32_t>(static_cast<unsigned char>(padded[i + 1])) << 8 |
                    static_cast<unsigned char>(padded[i + 2]));
  }
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

double trigram_jaccard(std::string_view a, std::string_view b) {
  const auto ga = char_trigrams(a);
  const auto gb = char_trigrams(b);
  std::vector<std::uint32_t> common;
  std::set_intersection(ga.begin(), ga.end(), gb.begin(), gb.end(),
                        std::back_inserter(common));
  const auto uni = ga.size() + gb.size() - common.size();
  return uni == 0 ? 0.0 : static_cast<double>(common.size()) / static_cast<double>(uni);
}

KnowledgeGraph KnowledgeGraph::build(std::vector<Entity> entities,
                                     std::vector<std::string> relation_iris,
                                     std::vector<Triple> triples) {
  KnowledgeGraph kg;
  kg.entities_ = std::move(entities);
  kg.relation_iris_ = std::move(relation_iris);
  for (std::size_t i = 0; i < kg.entities_.size(); ++i) {
    kg.entity_index_.emplace(kg.entities_[i].iri, EntityId{static_cast<std::uint32_t>(i)});
  }
  for (std::size_t i = 0; i < kg.relation_iris_.size(); ++i) {
    kg.relation_index_.emplace(kg.relation_iris_[i],
                               RelationId{static_cast<std::uint32_t>(i)});
  }

  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  kg.spo_ = std::move(triples);
  kg.pso_ = kg.spo_;
  std::sort(kg.pso_.begin(), kg.pso_.end(), ByPso{});
  kg.pos_ = kg.spo_;
  std::sort(kg.pos_.begin(), kg.pos_.end(), ByPos{});
  kg.osp_ = kg.spo_;
  std::sort(kg.osp_.begin(), kg.osp_.end(), ByOsp{});

  for (std::size_t i = 0; i < kg.entities_.size(); ++i) {
    auto key = normalize_label(kg.entities_[i].label);
    if (key.empty()) continue;
    auto [it, inserted] = kg.label_index_.try_emplace(key);
    it->second.push_back(EntityId{static_cast<std::uint32_t>(i)});
    if (inserted) {
      kg.max_label_tokens_ = std::max(kg.max_label_tokens_, tokenize(key).size());
    }
  }
  kg.label_keys_.reserve(kg.label_index_.size());
  for (const auto& [key, ids] : kg.label_index_) kg.label_keys_.push_back(key);
  std::sort(kg.label_keys_.begin(), kg.label_keys_.end());
  for (std::size_t k = 0; k < kg.label_keys_.size(); ++k) {
    kg.label_trigrams_.push_back(char_trigrams(kg.label_keys_[k]));
    for (auto g : kg.label_trigrams_.back()) {
      kg.trigram_postings_[g].push_back(static_cast<std::uint32_t>(k));
    }
  }
  return kg;
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view iri) const {
  auto it = entity_index_.find(std::string(iri));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view iri) const {
  auto it = relation_index_.find(std::string(iri));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

std::span<const Triple> KnowledgeGraph::candidates(const TriplePattern& p) const {
  if (p.predicate) {
    const RelationId rel = *p.predicate;
    if (p.subject) {
      return range_of(pso_, std::pair{rel, *p.subject},
                      [](const Triple& t) { return std::pair{t.predicate, t.subject}; });
    }
    if (p.object) {
      return range_of(pos_, std::pair{rel, *p.object},
                      [](const Triple& t) { return std::pair{t.predicate, t.object}; });
    }
    return range_of(pso_, rel, [](const Triple& t) { return t.predicate; });
  }
  if (p.subject) {
    return range_of(spo_, *p.subject, [](const Triple& t) { return t.subject; });
  }
  if (p.object) {
    return range_of(osp_, *p.object, [](const Triple& t) { return t.object; });
  }
  return spo_;
}

std::vector<Triple> KnowledgeGraph::match(const TriplePattern& pattern) const {
  std::vector<Triple> out;
  for (const auto& t : candidates(pattern)) {
    if (pattern.matches(t)) out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<EntityId> KnowledgeGraph::entities_with_label(std::string_view label) const {
  auto it = label_index_.find(normalize_label(label));
  if (it == label_index_.end()) return {};
  return it->second;
}

std::vector<EntityMention> KnowledgeGraph::link_entities(std::string_view question) const {
  const auto tokens = tokenize(question);
  const std::size_t n = tokens.size();
  std::vector<bool> word(n), covered(n, false);
  for (std::size_t i = 0; i < n; ++i) word[i] = has_word_char(tokens[i]);

  auto span_key = [&](std::size_t b, std::size_t e) {
    std::string joined;
    for (std::size_t i = b; i < e; ++i) {
      if (i > b) joined.push_back(' ');
      joined += tokens[i];
    }
    return normalize_label(joined);
  };
  auto free_span = [&](std::size_t b, std::size_t e) {
    if (!word[b] || !word[e - 1]) return false;
    for (std::size_t i = b; i < e; ++i) {
      if (covered[i]) return false;
    }
    return true;
  };
  auto cover = [&](TokenSpan s) {
    for (std::size_t i = s.begin; i < s.end; ++i) covered[i] = true;
  };

  std::vector<EntityMention> mentions;
  for (std::size_t len = std::min(max_label_tokens_, n); len >= 1; --len) {
    for (std::size_t b = 0; b + len <= n; ++b) {
      if (!free_span(b, b + len)) continue;
      auto it = label_index_.find(span_key(b, b + len));
      if (it == label_index_.end()) continue;
      mentions.push_back({{b, b + len}, it->second, 1.0});
      cover(mentions.back().span);
    }
  }

  // Fuzzy pass over whatever the exact pass left uncovered.
  std::vector<EntityMention> fuzzy;
  std::vector<std::uint32_t> shared(label_keys_.size(), 0);
  std::vector<std::uint32_t> touched;
  const std::size_t max_len = max_label_tokens_ + 1;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t e = b + 1; e <= n && e - b <= max_len; ++e) {
      if (!free_span(b, e)) continue;
      const auto grams = char_trigrams(span_key(b, e));
      touched.clear();
      for (auto g : grams) {
        auto post = trigram_postings_.find(g);
        if (post == trigram_postings_.end()) continue;
        for (auto k : post->second) {
          if (shared[k]++ == 0) touched.push_back(k);
        }
      }
      double best = 0.0;
      std::vector<std::uint32_t> best_keys;
      for (auto k : touched) {
        const double inter = shared[k];
        const double jac = inter / (grams.size() + label_trigrams_[k].size() - inter);
        shared[k] = 0;
        if (jac > best) {
          best = jac;
          best_keys.assign(1, k);
        } else if (jac == best) {
          best_keys.push_back(k);
        }
      }
      if (best < kFuzzyThreshold) continue;
      EntityMention m{{b, e}, {}, best};
      for (auto k : best_keys) {
        const auto& ids = label_index_.at(label_keys_[k]);
        m.entities.insert(m.entities.end(), ids.begin(), ids.end());
      }
      std::sort(m.entities.begin(), m.entities.end());
      fuzzy.push_back(std::move(m));
    }
  }
  std::stable_sort(fuzzy.begin(), fuzzy.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto la = a.span.end - a.span.begin, lb = b.span.end - b.span.begin;
    if (la != lb) return la > lb;
    return a.span.begin < b.span.begin;
  });
  for (auto& m : fuzzy) {
    if (!free_span(m.span.begin, m.span.end)) continue;
    cover(m.span);
    mentions.push_back(std::move(m));
  }
  std::sort(mentions.begin(), mentions.end(),
            [](const auto& a, const auto& b) { return a.span.begin < b.span.begin; });
  return mentions;
}

std::string KnowledgeGraph::triples_tsv() const {
  std::ostringstream out;
  for (const auto& t : spo_) {
    out << entities_[t.subject.value].iri << '\t' << relation_iris_[t.predicate.value]
        << '\t' << entities_[t.object.value].iri << '\n';
  }
  return out.str();
}

std::string KnowledgeGraph::labels_tsv() const {
  std::ostringstream out;
  for (const auto& e : entities_) out << e.iri << '\t' << e.label << '\n';
  return out.str();
}

KgLoadResult load_kg(const std::string& triples_path, const std::string& labels_path) {
  std::vector<Entity> entities;
  std::unordered_map<std::string, EntityId> entity_ids;
  std::vector<std::string> relations;
  std::unordered_map<std::string, RelationId> relation_ids;
  std::string line;

  std::ifstream labels(labels_path);
  if (!labels) throw DataError("cannot open label file " + labels_path);
  for (std::size_t lineno = 1; std::getline(labels, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty()) {
      throw DataError("expected 'entity_iri<TAB>label' in " + labels_path, lineno);
    }
    const EntityId id{static_cast<std::uint32_t>(entities.size())};
    if (!entity_ids.emplace(fields[0], id).second) {
      throw DataError("duplicate label entry for " + fields[0], lineno);
    }
    entities.push_back({std::move(fields[0]), std::move(fields[1])});
  }

  std::size_t unlabeled = 0;
  auto entity_of = [&](const std::string& iri) {
    auto [it, inserted] =
        entity_ids.try_emplace(iri, EntityId{static_cast<std::uint32_t>(entities.size())});
    if (inserted) {
      entities.push_back({iri, ""});
      ++unlabeled;
    }
    return it->second;
  };

  std::ifstream in(triples_path);
  if (!in) throw DataError("cannot open triples file " + triples_path);
  std::vector<Triple> triples;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw DataError("expected 3 tab-separated IRIs in " + triples_path, lineno);
    }
    auto [rel, inserted] = relation_ids.try_emplace(
        fields[1], RelationId{static_cast<std::uint32_t>(relations.size())});
    if (inserted) relations.push_back(fields[1]);
    const EntityId s = entity_of(fields[0]);
    const EntityId o = entity_of(fields[2]);
    triples.push_back({s, rel->second, o});
  }
  return {KnowledgeGraph::build(std::move(entities), std::move(relations), std::move(triples)),
          unlabeled};
}

}  // namespace kbqa
