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

#include "kbqa/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kbqa/error.hpp"
#include "kbqa/executor.hpp"
#include "kbqa/grounder.hpp"
#include "kbqa/query_ir.hpp"

namespace kbqa {
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files and records

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kRuntime, "cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::kRuntime, "write failed for " + tmp);
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string record_to_json(const DatasetRecord& r) {
  nlohmann::ordered_json j;
  j["question"] = r.question;
  j["sparql"] = r.sparql;
  j["entity_order"] = r.entity_order;
  j["answers"] = r.answers;
  j["path_signature"] = r.path_signature;
  if (!r.split.empty()) j["split"] = r.split;
  return j.dump();
}

DatasetRecord record_from_json(const std::string& line, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed JSON: ") + e.what(), lineno);
  }
  if (!j.is_object()) throw DataError("dataset line is not a JSON object", lineno);
  static const std::set<std::string> known{"question", "sparql", "entity_order",
                                           "answers", "path_signature", "split"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw DataError("unexpected field '" + key + "'", lineno);
  }
  auto str = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key)) {
      if (required) throw DataError(std::string("missing field '") + key + "'", lineno);
      return {};
    }
    if (!j[key].is_string()) throw DataError(std::string("field '") + key + "' must be a string", lineno);
    return j[key].get<std::string>();
  };
  auto list = [&](const char* key) {
    if (!j.contains(key)) throw DataError(std::string("missing field '") + key + "'", lineno);
    const auto& a = j[key];
    if (!a.is_array()) throw DataError(std::string("field '") + key + "' must be an array", lineno);
    std::vector<std::string> out;
    for (const auto& v : a) {
      if (!v.is_string()) throw DataError(std::string("field '") + key + "' must hold strings", lineno);
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  DatasetRecord r;
  r.question = str("question", true);
  r.sparql = str("sparql", true);
  r.entity_order = list("entity_order");
  r.answers = list("answers");
  r.path_signature = str("path_signature", true);
  r.split = str("split", false);
  return r;
}

std::vector<DatasetRecord> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path);
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(line, lineno));
    } catch (const DataError& e) {
      throw DataError(path + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const std::string& path, std::span<const DatasetRecord> records) {
  std::string content;
  for (const auto& r : records) {
    content += record_to_json(r);
    content += '\n';
  }
  write_file_atomic(path, content);
}

std::string record_category(const DatasetRecord& r) {
  std::string head;
  for (char c : r.sparql.substr(0, std::min<std::size_t>(r.sparql.size(), 32))) {
    head.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (head.rfind("ASK", 0) == 0) return "ask";
  if (head.find("COUNT") != std::string::npos) return "count";
  const auto hops = 1 + std::count(r.path_signature.begin(), r.path_signature.end(), '>');
  return std::to_string(hops) + "-hop";
}

// ---------------------------------------------------------------------------
// KG files

KgBundle load_kg_files(const std::string& triples, const std::string& labels,
                       const std::optional<std::string>& relation_labels) {
  KgLoadResult loaded = load_kg(triples, labels);
  std::unordered_map<std::string, std::string> rel_labels;
  if (relation_labels) rel_labels = read_relation_labels(*relation_labels);
  KgBundle out;
  out.catalog = RelationCatalog::build(loaded.kg.relation_iris(), rel_labels);
  out.kg = std::move(loaded.kg);
  out.unlabeled_entities = loaded.unlabeled_entities;
  return out;
}

KgBundle load_kg_dir(const std::string& dir) {
  const fs::path d(dir);
  const fs::path rel = d / "relations.tsv";
  std::optional<std::string> rel_path;
  if (fs::exists(rel)) rel_path = rel.string();
  return load_kg_files((d / "triples.tsv").string(), (d / "labels.tsv").string(), rel_path);
}

// ---------------------------------------------------------------------------
// Synthetic KGs

namespace {

const std::vector<std::string> kFirstNames{
    "alma",  "bruno", "carmen", "dmitri", "elena", "felix",  "greta", "hugo",
    "ingrid", "jonas", "kira",  "lucas",  "mara",  "nadia",  "oscar", "petra",
    "quentin", "rosa", "stefan", "tamara", "ulrich", "vera", "walter", "xenia",
    "yusuf", "zora",  "anton",  "bianca", "cyril", "dora",   "emil",  "flora",
    "gustav", "helga", "igor",  "jana",   "karl",  "lena",   "milo",  "nora"};
const std::vector<std::string> kSurnames{
    "abbott", "barlow", "castell", "dunmore", "ellery", "fairbank", "garrick", "holloway",
    "ives", "jarrow", "kessler", "lindqvist", "marlowe", "norcross", "okafor", "pembroke",
    "quill", "ravensworth", "sinclair", "thorne", "underhill", "vance", "whitlock", "yardley",
    "zeller", "ashby", "brennan", "corwin", "delacroix", "everhart", "finch", "galloway",
    "hartwell", "ingram", "jessup", "kowalski", "larkin", "mercer", "novak", "orlov"};
const std::vector<std::string> kTitleAdjectives{
    "silent", "crimson", "broken", "golden", "hidden", "frozen", "burning", "distant",
    "hollow", "savage", "quiet", "electric", "velvet", "iron", "paper", "lonely",
    "scarlet", "bitter", "wild", "endless", "northern", "amber", "restless", "fallen",
    "secret", "pale", "wandering", "shattered", "emerald", "forgotten"};
const std::vector<std::string> kTitleNouns{
    "river", "harbor", "garden", "empire", "mirror", "kingdom", "horizon", "lantern",
    "orchard", "desert", "summit", "shadow", "island", "compass", "tide", "meadow",
    "citadel", "canyon", "voyage", "thunder", "cathedral", "glacier", "carnival", "frontier",
    "labyrinth", "monsoon", "reckoning", "sanctuary", "serenade", "wilderness"};
const std::vector<std::string> kLanguages{"english", "french", "german", "spanish",
                                         "italian", "japanese", "korean", "hindi",
                                         "russian", "swedish", "danish", "portuguese"};
const std::vector<std::string> kGenres{"comedy", "drama", "thriller", "horror",
                                      "western", "romance", "musical", "documentary",
                                      "animation", "fantasy", "mystery", "crime"};
const std::vector<std::string> kTags{
    "time travel", "heist", "space exploration", "boxing", "chess", "dinosaurs",
    "vampires", "zombies", "pirates", "samurai", "robots", "aliens", "dragons",
    "submarines", "espionage", "amnesia", "revenge", "kidnapping", "survival",
    "friendship", "wedding", "basketball", "surfing", "volcanoes", "ghosts", "sorcery",
    "prison escape", "treasure hunt", "road trip", "artificial intelligence"};
const std::vector<std::string> kRatings{"dismal", "mediocre", "decent", "good", "superb", "acclaimed"};
const std::vector<std::string> kVotes{"obscure", "niche", "cult", "widespread", "famous", "iconic"};

struct RelationSpec {
  const char* name;
  const char* object_type;
  const char* movie_a_iri;
  const char* movie_b_iri;
  const char* movie_b_label;
};

const std::vector<RelationSpec>& relation_specs() {
  static const std::vector<RelationSpec> specs{
      {"directed_by", "director", "http://dbpedia.org/ontology/directedBy",
       "http://www.wikidata.org/prop/direct/P57", "film directed by"},
      {"starred_actors", "actor", "http://dbpedia.org/ontology/starredActors",
       "http://www.wikidata.org/prop/direct/P161", "cast actors"},
      {"written_by", "writer", "http://dbpedia.org/ontology/writtenBy",
       "http://www.wikidata.org/prop/direct/P58", "screenplay written by"},
      {"in_language", "language", "http://dbpedia.org/ontology/inLanguage",
       "http://www.wikidata.org/prop/direct/P364", "original language of film"},
      {"has_genre", "genre", "http://dbpedia.org/ontology/hasGenre",
       "http://www.wikidata.org/prop/direct/P136", "film genre"},
      {"release_year", "year", "http://dbpedia.org/ontology/releaseYear",
       "http://www.wikidata.org/prop/direct/P577", "publication year"},
      {"has_tags", "tag", "http://dbpedia.org/ontology/hasTags",
       "http://www.wikidata.org/prop/direct/P921", "main subject tags"},
      {"has_imdb_rating", "rating", "http://dbpedia.org/ontology/hasImdbRating",
       "http://www.wikidata.org/prop/direct/P444", "imdb rating score"},
      {"has_imdb_votes", "votes", "http://dbpedia.org/ontology/hasImdbVotes",
       "http://www.wikidata.org/prop/direct/P4970", "imdb votes count"},
  };
  return specs;
}

std::string dbpedia_resource(const std::string& label) {
  std::string out = "http://dbpedia.org/resource/";
  bool start = true;
  for (char c : label) {
    if (c == ' ') {
      out.push_back('_');
      start = true;
    } else {
      out.push_back(start ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c);
      start = false;
    }
  }
  return out;
}

template <class T>
std::size_t pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

KgProfile parse_profile(const std::string& name) {
  if (name == "movie-A") return KgProfile::kMovieA;
  if (name == "movie-B") return KgProfile::kMovieB;
  throw Error(ErrorKind::kUsage, "unknown profile '" + name + "' (expected movie-A or movie-B)");
}

std::string profile_name(KgProfile profile) {
  return profile == KgProfile::kMovieA ? "movie-A" : "movie-B";
}

const std::vector<std::string>& semantic_relations() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& s : relation_specs()) out.emplace_back(s.name);
    return out;
  }();
  return names;
}

KnowledgeGraph GeneratedKg::build_kg() const {
  return KnowledgeGraph::build(entities, relation_iris, triples);
}

RelationCatalog GeneratedKg::build_catalog() const {
  return RelationCatalog::build(relation_iris, relation_labels);
}

GeneratedKg gen_kg(KgProfile profile, std::uint64_t seed, const KgSizeParams& params) {
  const std::uint64_t salt = profile == KgProfile::kMovieA ? 0x41ULL : 0x42ULL;
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + salt);
  GeneratedKg g;
  g.profile = profile;
  for (const auto& s : relation_specs()) {
    if (profile == KgProfile::kMovieA) {
      g.relation_iris.emplace_back(s.movie_a_iri);
    } else {
      g.relation_iris.emplace_back(s.movie_b_iri);
      g.relation_labels.emplace(s.movie_b_iri, s.movie_b_label);
    }
  }

  auto add = [&](const std::string& type, const std::string& label) {
    const EntityId id{static_cast<std::uint32_t>(g.entities.size())};
    std::string iri = profile == KgProfile::kMovieA
                          ? dbpedia_resource(label)
                          : "http://www.wikidata.org/entity/Q" + std::to_string(10000 + id.value);
    g.entities.push_back({std::move(iri), label});
    g.by_type[type].push_back(id);
    return id;
  };

  std::vector<std::string> titles;
  for (const auto& a : kTitleAdjectives) {
    for (const auto& n : kTitleNouns) titles.push_back(a + " " + n);
  }
  std::shuffle(titles.begin(), titles.end(), rng);
  std::vector<std::string> people;
  for (const auto& f : kFirstNames) {
    for (const auto& s : kSurnames) people.push_back(f + " " + s);
  }
  std::shuffle(people.begin(), people.end(), rng);

  const auto n_movies = static_cast<std::size_t>(params.movies);
  if (n_movies > titles.size()) throw Error(ErrorKind::kUsage, "too many movies requested");
  for (std::size_t i = 0; i < n_movies; ++i) add("movie", titles[i]);

  // Persons: some directors also write, some writers also act.
  std::size_t next_person = 0;
  std::unordered_map<std::string, EntityId> person_ids;
  auto person = [&](const std::string& role, const std::string& name) {
    auto it = person_ids.find(name);
    EntityId id = it != person_ids.end() ? it->second : add("person", name);
    person_ids.emplace(name, id);
    g.by_type[role].push_back(id);
  };
  auto fresh = [&] {
    if (next_person >= people.size()) throw Error(ErrorKind::kUsage, "too many persons requested");
    return people[next_person++];
  };
  for (int i = 0; i < params.directors; ++i) person("director", fresh());
  const int shared_writers = params.writers / 4;
  for (int i = 0; i < params.writers; ++i) {
    if (i < shared_writers) {
      const auto& dirs = g.by_type["director"];
      person("writer", g.entities[dirs[static_cast<std::size_t>(i) * 2 % dirs.size()].value].label);
    } else {
      person("writer", fresh());
    }
  }
  for (int i = 0; i < params.actors; ++i) person("actor", fresh());

  for (const auto& l : kLanguages) add("language", l);
  for (const auto& l : kGenres) add("genre", l);
  for (int y = 1971; y <= 2010; ++y) add("year", std::to_string(y));
  for (const auto& l : kTags) add("tag", l);
  for (const auto& l : kRatings) add("rating", l);
  for (const auto& l : kVotes) add("votes", l);

  auto rel = [](std::size_t k) { return RelationId{static_cast<std::uint32_t>(k)}; };
  auto objects = [&](EntityId movie, std::size_t r, const std::vector<EntityId>& pool, int n) {
    std::vector<EntityId> chosen;
    while (static_cast<int>(chosen.size()) < n) {
      EntityId e = pool[pick(rng, pool)];
      if (std::find(chosen.begin(), chosen.end(), e) == chosen.end()) chosen.push_back(e);
    }
    for (EntityId e : chosen) g.triples.push_back({movie, rel(r), e});
  };
  for (EntityId m : g.by_type["movie"]) {
    const int extra = uniform_int(rng, 0, 99);
    objects(m, 0, g.by_type["director"], extra < 85 ? 1 : 2);
    objects(m, 1, g.by_type["actor"], uniform_int(rng, 3, 4));
    objects(m, 2, g.by_type["writer"], uniform_int(rng, 1, 2));
    objects(m, 3, g.by_type["language"], uniform_int(rng, 0, 99) < 85 ? 1 : 2);
    objects(m, 4, g.by_type["genre"], uniform_int(rng, 1, 2));
    objects(m, 5, g.by_type["year"], 1);
    objects(m, 6, g.by_type["tag"], uniform_int(rng, 1, 3));
    objects(m, 7, g.by_type["rating"], 1);
    objects(m, 8, g.by_type["votes"], 1);
  }
  return g;
}

void write_kg(const std::string& dir, const GeneratedKg& gen, std::uint64_t seed) {
  const KnowledgeGraph kg = gen.build_kg();
  const fs::path d(dir);
  fs::create_directories(d);
  const std::string triples = kg.triples_tsv();
  const std::string labels = kg.labels_tsv();
  std::string relations = "# relation_iri\tsurface\n";
  if (gen.relation_labels.empty()) relations += "# no explicit labels: surfaces derive from IRIs\n";
  for (const auto& iri : gen.relation_iris) {
    auto it = gen.relation_labels.find(iri);
    if (it != gen.relation_labels.end()) relations += iri + "\t" + it->second + "\n";
  }
  write_file_atomic((d / "triples.tsv").string(), triples);
  write_file_atomic((d / "labels.tsv").string(), labels);
  write_file_atomic((d / "relations.tsv").string(), relations);
  nlohmann::ordered_json manifest;
  manifest["profile"] = profile_name(gen.profile);
  manifest["seed"] = seed;
  manifest["entities"] = kg.entity_count();
  manifest["relations"] = kg.relation_count();
  manifest["triples"] = kg.triple_count();
  manifest["fnv1a64"] = {{"triples.tsv", hex64(fnv1a64(triples))},
                         {"labels.tsv", hex64(fnv1a64(labels))},
                         {"relations.tsv", hex64(fnv1a64(relations))}};
  write_file_atomic((d / "manifest.json").string(), manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Questions

namespace {

struct AskFrame {
  const char* text;
  bool movie_first;
};

struct RelationTemplates {
  std::vector<std::string> forward;  // "{M}" = a movie title
  std::vector<std::string> plural;   // "{M}" = "the <movie phrase>"
  std::vector<std::string> movies;   // movie phrases, "{X}" = the related entity
  std::vector<AskFrame> ask;         // "{M}" and "{X}"
  std::vector<std::string> shared;   // movies sharing this relation's object with {M}
};

const std::map<std::string, RelationTemplates>& templates() {
  static const std::map<std::string, RelationTemplates> t{
      {"directed_by",
       {{"who directed {M}", "who is the director of {M}", "which person directed {M}",
         "name the director of {M}"},
        {"who directed {M}", "who are the directors of {M}",
         "which people directed {M}", "name the directors of {M}"},
        {"films directed by {X}", "movies that {X} directed", "films by director {X}"},
        {{"did {X} direct {M}", false}, {"was {M} directed by {X}", true}},
        {"films that share directors with {M}", "movies by the director of {M}",
         "films made by the directors of {M}"}}},
      {"starred_actors",
       {{"who starred in {M}", "who acted in {M}", "which actors appeared in {M}",
         "name the cast of {M}"},
        {"who starred in {M}", "who acted in {M}",
         "which actors appeared in {M}", "name the cast of {M}"},
        {"films starring {X}", "movies that {X} acted in", "films featuring actor {X}"},
        {{"did {X} act in {M}", false}, {"does {M} star {X}", true}},
        {"films that share actors with {M}", "movies starring the actors of {M}",
         "films featuring the cast of {M}"}}},
      {"written_by",
       {{"who wrote {M}", "who is the writer of {M}", "who wrote the screenplay for {M}",
         "name the screenwriter of {M}"},
        {"who wrote {M}", "who are the writers of {M}",
         "who wrote the screenplays for {M}", "name the screenwriters of {M}"},
        {"films written by {X}", "movies that {X} wrote", "films with screenplays by {X}"},
        {{"did {X} write {M}", false}, {"was {M} written by {X}", true}},
        {"films that share writers with {M}", "movies written by the writers of {M}",
         "films scripted by the writers of {M}"}}},
      {"in_language",
       {{"what language is {M} in", "which language is spoken in {M}",
         "{M} is in which language", "name the language of {M}"},
        {"{M} are in which language", "what languages are {M} in",
         "which languages are spoken in {M}", "name the languages of {M}"},
        {"films in {X}", "movies in the {X} language", "films spoken in {X}"},
        {{"is {M} in {X}", true}, {"is {X} the language of {M}", false}},
        {}}},
      {"has_genre",
       {{"what genre is {M}", "what kind of film is {M}", "{M} belongs to which genre",
         "name the genre of {M}"},
        {"what genres are {M}", "what kinds of film are {M}",
         "{M} belong to which genres", "name the genres of {M}"},
        {"{X} films", "movies in the {X} genre", "films of genre {X}"},
        {{"is {M} a {X} film", true}, {"is {X} the genre of {M}", false}},
        {}}},
      {"release_year",
       {{"when was {M} released", "what year was {M} released",
         "in which year did {M} come out", "name the release year of {M}"},
        {"when were {M} released", "what years were {M} released",
         "in which years did {M} come out", "name the release years of {M}"},
        {"films released in {X}", "movies from {X}", "films that came out in {X}"},
        {{"was {M} released in {X}", true}, {"did {M} come out in {X}", true}},
        {}}},
      {"has_tags",
       {{"what topics is {M} about", "what is {M} about", "which tags describe {M}",
         "name the subjects of {M}"},
        {"what topics are {M} about", "what are {M} about",
         "which tags describe {M}", "name the subjects of {M}"},
        {"films about {X}", "movies tagged {X}", "films on the topic of {X}"},
        {},
        {}}},
      {"has_imdb_rating",
       {{"how is {M} rated", "what is the imdb rating of {M}", "what rating did {M} get",
         "name the rating of {M}"},
        {"how are {M} rated", "what are the imdb ratings of {M}",
         "what ratings did {M} get", "name the ratings of {M}"},
        {"films rated {X}", "movies with a {X} rating", "films that got a {X} imdb rating"},
        {},
        {}}},
      {"has_imdb_votes",
       {{"what vote tier is {M} in", "what is the imdb vote level of {M}",
         "how were the votes for {M}", "name the imdb votes of {M}"},
        {"what vote tiers are {M} in", "what are the imdb vote levels of {M}",
         "how were the votes for {M}", "name the imdb votes of {M}"},
        {"films with {X} votes", "movies that are {X} on imdb", "films voted {X}"},
        {},
        {}}},
  };
  return t;
}

const std::vector<std::string> kListFrames{"what are the {NP}", "list the {NP}", "name the {NP}",
                                           "show me the {NP}"};
const std::vector<std::string> kCountFrames{"how many {NP} are there", "count the {NP}",
                                            "what is the number of {NP}"};

std::string fill_slot(std::string text, const std::string& slot, const std::string& value) {
  const auto pos = text.find(slot);
  if (pos != std::string::npos) text.replace(pos, slot.size(), value);
  return text;
}

std::string iri(const std::string& s) { return "<" + s + ">"; }

class QuestionBuilder {
 public:
  QuestionBuilder(const GeneratedKg& gen, std::uint64_t seed)
      : gen_(gen), kg_(gen.build_kg()), rng_(seed * 0xD1B54A32D192ED03ULL + 0x51ULL) {
    for (std::size_t r = 0; r < gen.relation_iris.size(); ++r) {
      std::set<EntityId> objs;
      for (const auto& t : kg_.match({std::nullopt, RelationId{static_cast<std::uint32_t>(r)}, std::nullopt})) {
        objs.insert(t.object);
      }
      objects_.emplace_back(objs.begin(), objs.end());
    }
  }

  std::vector<DatasetRecord> take() { return std::move(out_); }

  void one_hop(int n) {
    const auto& rels = semantic_relations();
    for (std::size_t r = 0; r < rels.size(); ++r) {
      const auto& t = templates().at(rels[r]);
      sample(n, [&]() -> std::optional<DatasetRecord> {
        const EntityId m = movie();
        DatasetRecord rec;
        rec.question = fill_slot(t.forward[pick(rng_, t.forward)], "{M}", label(m));
        rec.sparql = "SELECT ?a WHERE { " + iri(ent(m)) + " " + iri(gen_.relation_iris[r]) + " ?a . }";
        rec.entity_order = {ent(m)};
        rec.path_signature = rels[r];
        return rec;
      });
      sample(n, [&]() -> std::optional<DatasetRecord> {
        const EntityId x = object(r);
        DatasetRecord rec;
        rec.question = fill_slot(kListFrames[pick(rng_, kListFrames)], "{NP}", movie_phrase(r, x));
        rec.sparql = "SELECT ?m WHERE { ?m " + iri(gen_.relation_iris[r]) + " " + iri(ent(x)) + " . }";
        rec.entity_order = {ent(x)};
        rec.path_signature = rels[r];
        return rec;
      });
    }
  }

  void two_hop(int n) {
    const auto& rels = semantic_relations();
    for (std::size_t r1 = 0; r1 < rels.size(); ++r1) {
      for (std::size_t r2 = 0; r2 < rels.size(); ++r2) {
        const auto& t2 = templates().at(rels[r2]);
        sample(n, [&]() -> std::optional<DatasetRecord> {
          const EntityId x = object(r1);
          DatasetRecord rec;
          rec.question = fill_slot(t2.plural[pick(rng_, t2.plural)], "{M}", "the " + movie_phrase(r1, x));
          rec.sparql = "SELECT ?a WHERE { ?m " + iri(gen_.relation_iris[r1]) + " " + iri(ent(x)) +
                       " . ?m " + iri(gen_.relation_iris[r2]) + " ?a . }";
          rec.entity_order = {ent(x)};
          rec.path_signature = rels[r1] + ">" + rels[r2];
          return rec;
        });
      }
    }
  }

  void three_hop(int n) {
    const auto& rels = semantic_relations();
    for (std::size_t r1 = 0; r1 < rels.size(); ++r1) {
      const auto& t1 = templates().at(rels[r1]);
      if (t1.shared.empty()) continue;
      for (std::size_t r3 = 0; r3 < rels.size(); ++r3) {
        const auto& t3 = templates().at(rels[r3]);
        sample(n, [&]() -> std::optional<DatasetRecord> {
          const EntityId m = movie();
          const std::string np = fill_slot(t1.shared[pick(rng_, t1.shared)], "{M}", label(m));
          DatasetRecord rec;
          rec.question = fill_slot(t3.plural[pick(rng_, t3.plural)], "{M}", "the " + np);
          rec.sparql = "SELECT ?a WHERE { " + iri(ent(m)) + " " + iri(gen_.relation_iris[r1]) +
                       " ?p . ?n " + iri(gen_.relation_iris[r1]) + " ?p . ?n " +
                       iri(gen_.relation_iris[r3]) + " ?a . }";
          rec.entity_order = {ent(m)};
          rec.path_signature = rels[r1] + ">" + rels[r1] + ">" + rels[r3];
          return rec;
        });
      }
    }
  }

  void ask(int n) {
    const auto& rels = semantic_relations();
    for (std::size_t r = 0; r < rels.size(); ++r) {
      const auto& t = templates().at(rels[r]);
      for (const auto& frame : t.ask) {
        int i = 0;
        sample(n, [&]() -> std::optional<DatasetRecord> {
          const bool want_true = (i++ % 2) == 0;
          const EntityId m = movie();
          const auto linked = kg_.match({m, RelationId{static_cast<std::uint32_t>(r)}, std::nullopt});
          EntityId x;
          if (want_true) {
            x = linked[std::uniform_int_distribution<std::size_t>(0, linked.size() - 1)(rng_)].object;
          } else {
            x = object(r);
            for (const auto& tr : linked) {
              if (tr.object == x) return std::nullopt;
            }
          }
          DatasetRecord rec;
          rec.question = fill_slot(fill_slot(frame.text, "{M}", label(m)), "{X}", label(x));
          rec.sparql = "ASK WHERE { " + iri(ent(m)) + " " + iri(gen_.relation_iris[r]) + " " +
                       iri(ent(x)) + " . }";
          rec.entity_order = frame.movie_first ? std::vector{ent(m), ent(x)}
                                               : std::vector{ent(x), ent(m)};
          rec.path_signature = rels[r];
          return rec;
        });
      }
    }
  }

  void count(int n) {
    const auto& rels = semantic_relations();
    for (std::size_t r = 0; r < rels.size(); ++r) {
      sample(n, [&]() -> std::optional<DatasetRecord> {
        const EntityId x = object(r);
        DatasetRecord rec;
        rec.question = fill_slot(kCountFrames[pick(rng_, kCountFrames)], "{NP}", movie_phrase(r, x));
        rec.sparql = "SELECT COUNT(?m) WHERE { ?m " + iri(gen_.relation_iris[r]) + " " +
                     iri(ent(x)) + " . }";
        rec.entity_order = {ent(x)};
        rec.path_signature = rels[r];
        return rec;
      });
    }
  }

 private:
  template <class Make>
  void sample(int n, Make make) {
    int made = 0;
    for (int attempt = 0; made < n && attempt < n * 50; ++attempt) {
      auto rec = make();
      if (!rec || seen_.count(rec->question)) continue;
      if (!finish(*rec)) continue;
      seen_.insert(rec->question);
      out_.push_back(std::move(*rec));
      ++made;
    }
  }

  // Executes the gold query and checks that the linker recovers entity_order.
  bool finish(DatasetRecord& rec) {
    const GroundedQuery q = resolve_sparql(parse_sparql(rec.sparql), kg_);
    const AnswerSet a = execute(q, kg_);
    if (!a.answered()) return false;
    rec.answers = answer_strings(a, kg_);
    const auto mentions = kg_.link_entities(rec.question);
    if (mentions.size() != rec.entity_order.size()) return false;
    for (std::size_t i = 0; i < mentions.size(); ++i) {
      const auto id = kg_.find_entity(rec.entity_order[i]);
      if (mentions[i].entities.size() != 1 || mentions[i].entities[0] != *id) return false;
    }
    return true;
  }

  EntityId movie() {
    const auto& ms = gen_.by_type.at("movie");
    return ms[pick(rng_, ms)];
  }
  EntityId object(std::size_t r) { return objects_[r][pick(rng_, objects_[r])]; }
  const std::string& label(EntityId e) const { return kg_.entity(e).label; }
  const std::string& ent(EntityId e) const { return kg_.entity(e).iri; }
  std::string movie_phrase(std::size_t r, EntityId x) {
    const auto& np = templates().at(semantic_relations()[r]).movies;
    return fill_slot(np[pick(rng_, np)], "{X}", label(x));
  }

  const GeneratedKg& gen_;
  KnowledgeGraph kg_;
  std::mt19937_64 rng_;
  std::vector<std::vector<EntityId>> objects_;
  std::set<std::string> seen_;
  std::vector<DatasetRecord> out_;
};

}  // namespace

std::vector<DatasetRecord> gen_questions(const GeneratedKg& gen, std::uint64_t seed,
                                         const QuestionCounts& counts) {
  QuestionBuilder b(gen, seed);
  b.one_hop(counts.one_hop);
  b.two_hop(counts.two_hop);
  b.three_hop(counts.three_hop);
  b.ask(counts.ask);
  b.count(counts.count);
  return b.take();
}

void assign_splits(std::vector<DatasetRecord>& records, double train, double valid,
                   std::uint64_t seed) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(records.size());
  const auto n_train = static_cast<std::size_t>(n * train + 0.5);
  const auto n_valid = static_cast<std::size_t>(n * valid + 0.5);
  for (std::size_t i = 0; i < order.size(); ++i) {
    records[order[i]].split = i < n_train ? "train" : i < n_train + n_valid ? "valid" : "test";
  }
}

std::vector<DatasetRecord> filter_split(std::span<const DatasetRecord> records,
                                        const std::string& split) {
  std::vector<DatasetRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

std::vector<DatasetRecord> filter_category(std::span<const DatasetRecord> records,
                                           const std::string& category) {
  std::vector<DatasetRecord> out;
  for (const auto& r : records) {
    if (record_category(r) == category) out.push_back(r);
  }
  return out;
}

std::vector<std::string> signature_relations(const std::string& signature) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto gt = signature.find('>', start);
    out.push_back(signature.substr(start, gt - start));
    if (gt == std::string::npos) break;
    start = gt + 1;
  }
  return out;
}

UnseenSplit make_unseen_split(std::span<const DatasetRecord> records,
                              std::span<const std::string> excluded, double dev_fraction,
                              std::uint64_t seed) {
  const std::set<std::string> ex(excluded.begin(), excluded.end());
  UnseenSplit out;
  std::vector<DatasetRecord> rest;
  std::set<std::string> found;
  for (const auto& r : records) {
    if (ex.count(r.path_signature)) {
      found.insert(r.path_signature);
      out.unseen_dev.push_back(r);
      out.unseen_dev.back().split = "unseen-dev";
    } else {
      rest.push_back(r);
    }
  }
  for (const auto& sig : ex) {
    if (!found.count(sig)) throw DataError("excluded path signature '" + sig + "' has no records");
  }
  std::vector<std::size_t> order(rest.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_dev = static_cast<std::size_t>(static_cast<double>(rest.size()) * dev_fraction + 0.5);
  std::vector<bool> is_dev(rest.size(), false);
  for (std::size_t i = 0; i < n_dev && i < order.size(); ++i) is_dev[order[i]] = true;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    auto& dst = is_dev[i] ? out.seen_dev : out.train;
    dst.push_back(std::move(rest[i]));
    dst.back().split = is_dev[i] ? "seen-dev" : "train";
  }
  std::set<std::string> train_relations;
  for (const auto& r : out.train) {
    for (auto& rel : signature_relations(r.path_signature)) train_relations.insert(rel);
  }
  for (const auto& sig : ex) {
    for (const auto& rel : signature_relations(sig)) {
      if (!train_relations.count(rel)) throw CoverageViolation(rel);
    }
  }
  return out;
}

std::vector<std::string> question_vocabulary(std::span<const DatasetRecord> records) {
  std::set<std::string> words;
  for (const auto& r : records) {
    for (auto& w : tokenize(r.question)) words.insert(std::move(w));
  }
  return {words.begin(), words.end()};
}

double vocabulary_overlap(std::span<const DatasetRecord> a, std::span<const DatasetRecord> b) {
  const auto va = question_vocabulary(a);
  const auto vb = question_vocabulary(b);
  std::vector<std::string> inter, uni;
  std::set_intersection(va.begin(), va.end(), vb.begin(), vb.end(), std::back_inserter(inter));
  std::set_union(va.begin(), va.end(), vb.begin(), vb.end(), std::back_inserter(uni));
  return uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

// ---------------------------------------------------------------------------
// Preprocessing

std::size_t PreprocessResult::rejected_total() const {
  std::size_t n = 0;
  for (const auto& [_, c] : rejected) n += c;
  return n;
}

PreprocessResult preprocess(std::span<const DatasetRecord> records,
                            const RelationCatalog& catalog, const TokenVocab& vocab,
                            const ModelConfig& limits) {
  PreprocessResult out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    std::string reason;
    try {
      const auto words = tokenize(r.question);
      if (words.size() > static_cast<std::size_t>(limits.max_question_len)) {
        throw TooLong(words.size(), static_cast<std::size_t>(limits.max_question_len));
      }
      const CanonicalQuery canon = canonicalize_gold(r.sparql, r.entity_order, catalog);
      TrainingExample ex;
      ex.question = vocab.encode(words);
      ex.target = serialize(canon.skeleton);
      if (ex.target.size() > static_cast<std::size_t>(limits.max_skeleton_len)) {
        throw TooLong(ex.target.size(), static_cast<std::size_t>(limits.max_skeleton_len));
      }
      for (const auto& s : canon.surfaces) ex.gold_surfaces.push_back(*catalog.find_surface(s));
      ex.entity_order = r.entity_order;
      out.examples.push_back(std::move(ex));
      out.kept.push_back(i);
      continue;
    } catch (const TooLong&) {
      reason = "too long";
    } catch (const UnsupportedSyntax&) {
      reason = "unsupported syntax";
    } catch (const UnknownEntityOrder&) {
      reason = "entity order mismatch";
    } catch (const InvalidSkeleton&) {
      reason = "skeleton limits";
    } catch (const DataError&) {
      reason = "unknown relation";
    }
    ++out.rejected[reason];
  }
  return out;
}

std::vector<std::vector<std::string>> vocabulary_corpus(
    std::span<const DatasetRecord> records, std::span<const RelationCatalog* const> catalogs) {
  std::vector<std::vector<std::string>> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(tokenize(r.question));
  for (const auto* c : catalogs) {
    for (const auto& s : c->surfaces()) out.push_back(tokenize(s));
  }
  return out;
}

}  // namespace kbqa
