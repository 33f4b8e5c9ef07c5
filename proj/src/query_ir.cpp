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

#include "kbqa/query_ir.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>

#include "kbqa/error.hpp"
#include "kbqa/kg_store.hpp"
#include "kbqa/text.hpp"

namespace kbqa {
namespace {

constexpr std::array<std::string_view, kSkeletonVocabSize> kTokenNames = {
    "BOS",  "EOS",  "SELECT", "ASK",  "COUNT", "OPEN",  "CLOSE",
    "DOT",  "FILTER", "VAR0", "VAR1", "VAR2",  "VAR3",  "ENT0",
    "ENT1", "ENT2", "PROP0",  "PROP1", "PROP2", "PROP3"};

bool is_var_tok(SkelTok t) { return t >= SkelTok::kVar0 && t <= SkelTok::kVar3; }
bool is_ent_tok(SkelTok t) { return t >= SkelTok::kEnt0 && t <= SkelTok::kEnt2; }

std::optional<Term> term_of(SkelTok t) {
  if (is_var_tok(t)) return Term::var(static_cast<int>(t) - static_cast<int>(SkelTok::kVar0));
  if (is_ent_tok(t)) return Term::ent(static_cast<int>(t) - static_cast<int>(SkelTok::kEnt0));
  return std::nullopt;
}

SkelTok term_token(const Term& t) {
  return t.is_var() ? var_token(t.index) : ent_token(t.index);
}

std::string term_text(const Term& t) {
  return t.is_var() ? "?var" + std::to_string(t.index) : ":ent" + std::to_string(t.index);
}

// Checks the structural invariants that token order alone does not enforce.
std::optional<std::string> check_invariants(const QuerySkeleton& s) {
  if (s.patterns.empty()) return "no patterns";
  if (static_cast<int>(s.patterns.size()) > kMaxPatterns) return "too many patterns";

  std::vector<int> var_order;
  auto see_var = [&](int k) {
    if (std::find(var_order.begin(), var_order.end(), k) == var_order.end()) {
      var_order.push_back(k);
    }
  };
  if (s.projection) see_var(*s.projection);
  std::vector<int> prop_order;
  std::set<int> ents;
  for (const auto& p : s.patterns) {
    for (const Term* t : {&p.subject, &p.object}) {
      if (t->is_var()) {
        see_var(t->index);
      } else {
        ents.insert(t->index);
      }
    }
    if (std::find(prop_order.begin(), prop_order.end(), p.prop) == prop_order.end()) {
      prop_order.push_back(p.prop);
    }
  }
  for (std::size_t i = 0; i < var_order.size(); ++i) {
    if (var_order[i] != static_cast<int>(i)) return "non-canonical variable numbering";
  }
  for (std::size_t i = 0; i < prop_order.size(); ++i) {
    if (prop_order[i] != static_cast<int>(i)) return "gapped placeholders";
  }
  int expect = 0;
  for (int e : ents) {
    if (e != expect++) return "gapped placeholders";
  }
  if (static_cast<int>(var_order.size()) > kMaxVars) return "too many variables";
  if (static_cast<int>(ents.size()) > kMaxEntities) return "too many entities";
  if (static_cast<int>(prop_order.size()) > kMaxProps) return "too many relations";

  if (s.projection) {
    bool bound = false;
    for (const auto& p : s.patterns) {
      bound = bound || p.subject == Term::var(*s.projection) ||
              p.object == Term::var(*s.projection);
    }
    if (!bound) return "projection variable does not occur in patterns";
  }

  for (std::size_t i = 1; i < s.patterns.size(); ++i) {
    const auto& cur = s.patterns[i];
    bool linked = false;
    for (std::size_t j = 0; j < i && !linked; ++j) {
      const auto& prev = s.patterns[j];
      for (const Term* a : {&cur.subject, &cur.object}) {
        linked = linked || *a == prev.subject || *a == prev.object;
      }
    }
    if (!linked) return "disconnected pattern graph";
  }
  return std::nullopt;
}

// --- SPARQL subset lexer ---

enum class LexKind { kPunct, kVar, kIri, kWord, kEnd };

struct Lexeme {
  LexKind kind;
  std::string text;
};

std::vector<Lexeme> lex_sparql(std::string_view text) {
  std::vector<Lexeme> out;
  std::size_t i = 0;
  auto name_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '{' || c == '}' || c == '(' || c == ')' || c == '.') {
      out.push_back({LexKind::kPunct, std::string(1, c)});
      ++i;
    } else if (c == '?') {
      std::size_t j = i + 1;
      while (j < text.size() && name_char(text[j])) ++j;
      if (j == i + 1) throw UnsupportedSyntax("empty variable name");
      out.push_back({LexKind::kVar, std::string(text.substr(i + 1, j - i - 1))});
      i = j;
    } else if (c == '<') {
      const auto close = text.find('>', i);
      if (close == std::string_view::npos) throw UnsupportedSyntax("unterminated IRI");
      auto iri = text.substr(i + 1, close - i - 1);
      if (iri.empty() || std::any_of(iri.begin(), iri.end(), [](char ch) {
            return std::isspace(static_cast<unsigned char>(ch)) || ch == '<';
          })) {
        throw UnsupportedSyntax("malformed IRI");
      }
      out.push_back({LexKind::kIri, std::string(iri)});
      i = close + 1;
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < text.size() && name_char(text[j])) ++j;
      std::string word(text.substr(i, j - i));
      for (auto& ch : word) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      out.push_back({LexKind::kWord, std::move(word)});
      i = j;
    } else {
      throw UnsupportedSyntax(std::string("unexpected character '") + c + "'");
    }
  }
  out.push_back({LexKind::kEnd, ""});
  return out;
}

class SparqlParser {
 public:
  explicit SparqlParser(std::vector<Lexeme> lex) : lex_(std::move(lex)) {}

  SparqlQuery run() {
    SparqlQuery q;
    const auto& head = next();
    if (head.kind == LexKind::kWord && head.text == "ASK") {
      q.form = QueryForm::kAsk;
    } else if (head.kind == LexKind::kWord && head.text == "SELECT") {
      const auto& what = next();
      if (what.kind == LexKind::kVar) {
        q.form = QueryForm::kSelect;
        q.projection = what.text;
      } else if (what.kind == LexKind::kWord && what.text == "COUNT") {
        q.form = QueryForm::kCount;
        expect_punct("(");
        const auto& v = next();
        if (v.kind != LexKind::kVar) throw UnsupportedSyntax("COUNT needs a variable");
        q.projection = v.text;
        expect_punct(")");
      } else {
        throw UnsupportedSyntax("expected projection after SELECT, got '" + what.text + "'");
      }
    } else {
      throw UnsupportedSyntax("query must start with SELECT or ASK, got '" + head.text + "'");
    }
    const auto& where = next();
    if (where.kind != LexKind::kWord || where.text != "WHERE") {
      throw UnsupportedSyntax("expected WHERE, got '" + where.text + "'");
    }
    expect_punct("{");
    while (!(peek().kind == LexKind::kPunct && peek().text == "}")) {
      SparqlTriple t;
      t.subject = term();
      const auto& pred = next();
      if (pred.kind != LexKind::kIri) {
        throw UnsupportedSyntax("predicate must be an IRI, got '" + pred.text + "'");
      }
      t.predicate = pred.text;
      t.object = term();
      expect_punct(".");
      q.triples.push_back(std::move(t));
    }
    expect_punct("}");
    if (peek().kind != LexKind::kEnd) {
      throw UnsupportedSyntax("trailing input '" + peek().text + "'");
    }
    return q;
  }

 private:
  const Lexeme& peek() const { return lex_[pos_]; }
  const Lexeme& next() {
    const auto& l = lex_[pos_];
    if (l.kind != LexKind::kEnd) ++pos_;
    return l;
  }
  void expect_punct(std::string_view p) {
    const auto& l = next();
    if (l.kind != LexKind::kPunct || l.text != p) {
      throw UnsupportedSyntax("expected '" + std::string(p) + "', got '" + l.text + "'");
    }
  }
  SparqlTerm term() {
    const auto& l = next();
    if (l.kind == LexKind::kVar) return {true, l.text};
    if (l.kind == LexKind::kIri) return {false, l.text};
    throw UnsupportedSyntax("expected ?var or <iri>, got '" + l.text + "'");
  }

  std::vector<Lexeme> lex_;
  std::size_t pos_ = 0;
};

// Numbers variables by first occurrence: projection, then patterns.
class VarNumbering {
 public:
  int operator()(const std::string& name) {
    auto [it, inserted] = ids_.try_emplace(name, static_cast<int>(ids_.size()));
    return it->second;
  }
  std::size_t size() const { return ids_.size(); }

 private:
  std::map<std::string, int> ids_;
};

}  // namespace

std::string_view token_name(SkelTok tok) { return kTokenNames.at(static_cast<std::size_t>(tok)); }

std::optional<SkelTok> token_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kTokenNames.size(); ++i) {
    if (kTokenNames[i] == name) return static_cast<SkelTok>(i);
  }
  return std::nullopt;
}

int QuerySkeleton::entity_count() const {
  int n = 0;
  for (const auto& p : patterns) {
    for (const Term* t : {&p.subject, &p.object}) {
      if (!t->is_var()) n = std::max(n, t->index + 1);
    }
  }
  return n;
}

int QuerySkeleton::prop_count() const {
  int n = 0;
  for (const auto& p : patterns) n = std::max(n, p.prop + 1);
  return n;
}

int QuerySkeleton::var_count() const {
  int n = projection ? *projection + 1 : 0;
  for (const auto& p : patterns) {
    for (const Term* t : {&p.subject, &p.object}) {
      if (t->is_var()) n = std::max(n, t->index + 1);
    }
  }
  return n;
}

std::string QuerySkeleton::to_string() const {
  std::string out;
  switch (form) {
    case QueryForm::kSelect: out = "SELECT ?var" + std::to_string(projection.value_or(0)); break;
    case QueryForm::kCount: out = "SELECT COUNT(?var" + std::to_string(projection.value_or(0)) + ")"; break;
    case QueryForm::kAsk: out = "ASK"; break;
  }
  out += " WHERE {";
  for (const auto& p : patterns) {
    out += " " + term_text(p.subject) + " :prop" + std::to_string(p.prop) + " " +
           term_text(p.object) + " .";
  }
  out += " }";
  return out;
}

std::vector<SkelTok> serialize(const QuerySkeleton& s) {
  std::vector<SkelTok> out{SkelTok::kBos};
  switch (s.form) {
    case QueryForm::kSelect: out.push_back(SkelTok::kSelect); break;
    case QueryForm::kAsk: out.push_back(SkelTok::kAsk); break;
    case QueryForm::kCount: out.push_back(SkelTok::kCount); break;
  }
  if (s.form != QueryForm::kAsk) out.push_back(var_token(s.projection.value_or(0)));
  out.push_back(SkelTok::kOpen);
  for (const auto& p : s.patterns) {
    out.push_back(term_token(p.subject));
    out.push_back(prop_token(p.prop));
    out.push_back(term_token(p.object));
    out.push_back(SkelTok::kDot);
  }
  out.push_back(SkelTok::kClose);
  out.push_back(SkelTok::kEos);
  return out;
}

std::optional<QuerySkeleton> try_parse(std::span<const SkelTok> tokens, std::string* reason) {
  auto fail = [&](std::string why) -> std::optional<QuerySkeleton> {
    if (reason) *reason = std::move(why);
    return std::nullopt;
  };
  std::size_t i = 0;
  auto at = [&](std::size_t k) -> std::optional<SkelTok> {
    if (k < tokens.size()) return tokens[k];
    return std::nullopt;
  };
  for (auto t : tokens) {
    if (t == SkelTok::kFilterReserved) return fail("FILTER is not supported");
  }
  if (at(i++) != SkelTok::kBos) return fail("missing BOS");
  QuerySkeleton s;
  auto form = at(i++);
  if (form == SkelTok::kSelect || form == SkelTok::kCount) {
    s.form = form == SkelTok::kSelect ? QueryForm::kSelect : QueryForm::kCount;
    auto v = at(i++);
    if (!v || !is_var_tok(*v)) return fail("expected projection variable");
    s.projection = term_of(*v)->index;
  } else if (form == SkelTok::kAsk) {
    s.form = QueryForm::kAsk;
  } else {
    return fail("expected query form");
  }
  if (at(i++) != SkelTok::kOpen) return fail("expected OPEN");
  while (true) {
    auto t = at(i);
    if (!t) return fail("truncated sequence");
    if (*t == SkelTok::kClose) {
      ++i;
      break;
    }
    if (static_cast<int>(s.patterns.size()) >= kMaxPatterns) return fail("too many patterns");
    auto subj = term_of(*t);
    auto pred = at(i + 1);
    auto obj = at(i + 2) ? term_of(*at(i + 2)) : std::nullopt;
    if (!subj || !pred || !is_prop(*pred) || !obj) return fail("bad token order in pattern");
    if (at(i + 3) != SkelTok::kDot) return fail("expected DOT");
    s.patterns.push_back({*subj, prop_index(*pred), *obj});
    i += 4;
  }
  if (at(i++) != SkelTok::kEos) return fail("expected EOS after CLOSE");
  if (i != tokens.size()) return fail("tokens after EOS");
  if (auto why = check_invariants(s)) return fail(*why);
  return s;
}

QuerySkeleton parse(std::span<const SkelTok> tokens) {
  std::string reason;
  auto s = try_parse(tokens, &reason);
  if (!s) throw InvalidSkeleton(reason);
  return *std::move(s);
}

std::string tokens_to_string(std::span<const SkelTok> tokens) {
  std::string out;
  for (auto t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += token_name(t);
  }
  return out;
}

SparqlQuery parse_sparql(std::string_view text) {
  return SparqlParser(lex_sparql(text)).run();
}

CanonicalQuery canonicalize_gold(std::string_view sparql_text,
                                 std::span<const std::string> entity_order,
                                 const RelationCatalog& catalog) {
  const SparqlQuery q = parse_sparql(sparql_text);
  CanonicalQuery out;
  out.skeleton.form = q.form;
  VarNumbering vars;
  if (q.form != QueryForm::kAsk) out.skeleton.projection = vars(q.projection);

  auto map_term = [&](const SparqlTerm& t) {
    if (t.is_var) return Term::var(vars(t.text));
    auto it = std::find(entity_order.begin(), entity_order.end(), t.text);
    if (it == entity_order.end()) throw UnknownEntityOrder(t.text);
    return Term::ent(static_cast<int>(it - entity_order.begin()));
  };
  for (const auto& t : q.triples) {
    SkeletonPattern p;
    p.subject = map_term(t.subject);
    auto it = std::find(out.relation_iris.begin(), out.relation_iris.end(), t.predicate);
    p.prop = static_cast<int>(it - out.relation_iris.begin());
    if (it == out.relation_iris.end()) {
      auto rel = catalog.find_relation(t.predicate);
      if (!rel) throw DataError("relation not in catalog: " + t.predicate);
      out.relation_iris.push_back(t.predicate);
      out.surfaces.push_back(catalog.surface(catalog.surface_of(*rel)));
    }
    p.object = map_term(t.object);
    out.skeleton.patterns.push_back(p);
  }
  if (auto why = check_invariants(out.skeleton)) throw InvalidSkeleton(*why);
  return out;
}

GroundedQuery ground(const QuerySkeleton& skeleton, std::span<const EntityId> entities,
                     std::span<const RelationId> relations) {
  if (static_cast<int>(entities.size()) != skeleton.entity_count() ||
      static_cast<int>(relations.size()) != skeleton.prop_count()) {
    throw Error(ErrorKind::kRuntime, "grounding arity does not match skeleton");
  }
  GroundedQuery q;
  q.form = skeleton.form;
  q.projection = skeleton.projection;
  auto bind = [&](const Term& t) {
    return t.is_var() ? GroundedTerm::variable(t.index) : GroundedTerm::constant(entities[t.index]);
  };
  for (const auto& p : skeleton.patterns) {
    q.patterns.push_back({bind(p.subject), relations[p.prop], bind(p.object)});
  }
  q.provenance.skeleton = skeleton;
  q.provenance.relations.assign(relations.begin(), relations.end());
  q.provenance.entities.assign(entities.begin(), entities.end());
  return q;
}

std::string print_sparql(const GroundedQuery& q, const KnowledgeGraph& kg) {
  auto term = [&](const GroundedTerm& t) {
    return t.is_var ? "?var" + std::to_string(t.var) : "<" + kg.entity(t.entity).iri + ">";
  };
  std::string out;
  switch (q.form) {
    case QueryForm::kSelect: out = "SELECT ?var" + std::to_string(q.projection.value_or(0)); break;
    case QueryForm::kCount: out = "SELECT COUNT(?var" + std::to_string(q.projection.value_or(0)) + ")"; break;
    case QueryForm::kAsk: out = "ASK"; break;
  }
  out += " WHERE {";
  for (const auto& p : q.patterns) {
    out += " " + term(p.subject) + " <" + kg.relation_iri(p.predicate) + "> " + term(p.object) + " .";
  }
  out += " }";
  return out;
}

GroundedQuery resolve_sparql(const SparqlQuery& query, const KnowledgeGraph& kg) {
  GroundedQuery q;
  q.form = query.form;
  VarNumbering vars;
  if (query.form != QueryForm::kAsk) q.projection = vars(query.projection);
  auto term = [&](const SparqlTerm& t) {
    if (t.is_var) return GroundedTerm::variable(vars(t.text));
    auto e = kg.find_entity(t.text);
    if (!e) throw DataError("unknown entity IRI " + t.text);
    return GroundedTerm::constant(*e);
  };
  for (const auto& t : query.triples) {
    GroundedPattern p;
    p.subject = term(t.subject);
    auto r = kg.find_relation(t.predicate);
    if (!r) throw DataError("unknown relation IRI " + t.predicate);
    p.predicate = *r;
    p.object = term(t.object);
    q.patterns.push_back(p);
  }
  if (vars.size() > static_cast<std::size_t>(kMaxVars)) {
    throw UnsupportedSyntax("more than " + std::to_string(kMaxVars) + " variables");
  }
  return q;
}

}  // namespace kbqa
