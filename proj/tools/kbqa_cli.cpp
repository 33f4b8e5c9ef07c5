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

// Command-line front end: KG building, data generation, training,
// evaluation, experiments, and interactive question answering.

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kbqa/data.hpp"
#include "kbqa/error.hpp"
#include "kbqa/grounder.hpp"
#include "kbqa/parser_model.hpp"
#include "kbqa/train_eval.hpp"

namespace fs = std::filesystem;
using namespace kbqa;

namespace {

struct Options {
  std::vector<std::string> kg;
  std::vector<std::string> dataset;
  std::string labels;
  std::string catalog;
  std::string ckpt;
  std::string init;
  std::string out;
  std::string config;
  std::string profile;
  std::string n = "0,10,50,100,500";
  std::string exclude_paths = "starred_actors>directed_by,directed_by>starred_actors";
  std::string split;
  std::vector<std::string> vocab_from;
  std::vector<std::string> questions;
  std::uint64_t seed = 1;
  std::optional<int> beam;
  std::optional<int> shortlist;
  std::optional<int> epochs;
  std::optional<double> lr;
  bool trace = false;
};

std::string shortest(double v) {
  char buf[64];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

// Model and training settings after merging the config file and flags.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TrainConfig finetune;
  std::uint64_t seed = 1;

  std::string describe() const {
    std::string out;
    for (const auto& [k, v] : model.to_pairs()) out += " " + k + "=" + v;
    auto t = [&](const std::string& p, const TrainConfig& c) {
      out += " " + p + "epochs=" + std::to_string(c.epochs) + " " + p +
             "batch_size=" + std::to_string(c.batch_size) + " " + p + "lr=" + shortest(c.lr) +
             " " + p + "clip_norm=" + shortest(c.clip_norm) + " " + p +
             "patience=" + std::to_string(c.patience);
    };
    t("", train);
    t("finetune.", finetune);
    return "resolved config: run_seed=" + std::to_string(seed) + out;
  }
};

void apply_train_key(TrainConfig& t, const std::string& key, const std::string& value) {
  try {
    if (key == "epochs") t.epochs = std::stoi(value);
    else if (key == "batch_size") t.batch_size = std::stoi(value);
    else if (key == "lr") t.lr = std::stod(value);
    else if (key == "clip_norm") t.clip_norm = std::stod(value);
    else if (key == "patience") t.patience = std::stoi(value);
    else throw Error(ErrorKind::kUsage, "unknown config key '" + key + "'");
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::kUsage, "bad value for " + key + ": '" + value + "'");
  }
}

bool is_train_key(const std::string& key) {
  return key == "epochs" || key == "batch_size" || key == "lr" || key == "clip_norm" ||
         key == "patience";
}

std::uint64_t effective_seed(std::uint64_t flag_seed) {
  if (const char* env = std::getenv("STAG_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kUsage, std::string("STAG_SEED is not an integer: ") + env);
    }
  }
  return flag_seed;
}

RunConfig resolve(const Options& o) {
  RunConfig rc;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw Error(ErrorKind::kUsage, "cannot open config file " + o.config);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::kUsage, o.config + ":" + std::to_string(lineno) + ": expected key=value");
      }
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.rfind("finetune.", 0) == 0) {
        apply_train_key(rc.finetune, key.substr(9), value);
      } else if (is_train_key(key)) {
        apply_train_key(rc.train, key, value);
      } else {
        rc.model.apply(key, value);
      }
    }
  }
  rc.seed = effective_seed(o.seed);
  rc.model.seed = rc.seed;
  rc.train.seed = rc.seed;
  rc.finetune.seed = rc.seed;
  if (o.epochs) rc.train.epochs = *o.epochs;
  if (o.lr) rc.train.lr = *o.lr;
  if (o.beam) rc.model.beam = *o.beam;
  if (o.shortlist) rc.model.shortlist = *o.shortlist;
  rc.model.validate();
  return rc;
}

void log(const std::string& msg) { std::cerr << msg << '\n'; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

const std::string& need(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorKind::kUsage, std::string(flag) + " is required");
  return value;
}

const std::string& need_at(const std::vector<std::string>& values, std::size_t i, const char* flag) {
  if (values.size() <= i) {
    throw Error(ErrorKind::kUsage, std::string(flag) + " is required" +
                                       (i > 0 ? " (" + std::to_string(i + 1) + " times)" : ""));
  }
  return values[i];
}

ParserModel load_model(const Options& o, const RunConfig& rc) {
  ParserModel model = ParserModel::load(need(o.ckpt, "--ckpt"));
  if (o.beam) model.mutable_config().beam = rc.model.beam;
  if (o.shortlist) model.mutable_config().shortlist = rc.model.shortlist;
  return model;
}

std::vector<DatasetRecord> split_or_all(const std::vector<DatasetRecord>& records,
                                        const std::string& split) {
  return split.empty() ? records : filter_split(records, split);
}

void print_metrics(const std::string& prefix, const Metrics& m) {
  std::cout << prefix << "precision=" << fmt(m.precision) << " recall=" << fmt(m.recall)
            << " f1=" << fmt(m.f1) << " hits@1=" << fmt(m.hits_at_1)
            << " questions=" << m.per_question.size() << '\n';
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_build_kg(const Options& o) {
  const std::string& out = need(o.out, "--out");
  if (!o.profile.empty()) {
    const std::uint64_t seed = effective_seed(o.seed);
    const GeneratedKg gen = gen_kg(parse_profile(o.profile), seed);
    write_kg(out, gen, seed);
    const KnowledgeGraph kg = gen.build_kg();
    std::cout << "wrote " << out << ": entities=" << kg.entity_count()
              << " relations=" << kg.relation_count() << " triples=" << kg.triple_count() << '\n';
    return 0;
  }
  std::optional<std::string> rel;
  if (!o.catalog.empty()) rel = o.catalog;
  const KgBundle kb = load_kg_files(need_at(o.kg, 0, "--kg"), need(o.labels, "--labels"), rel);
  std::string relations = "# relation_iri\tsurface\n";
  for (std::size_t r = 0; r < kb.catalog.relation_count(); ++r) {
    const RelationId id{static_cast<std::uint32_t>(r)};
    relations += kb.catalog.relation_iri(id) + "\t" + kb.catalog.surface(kb.catalog.surface_of(id)) + "\n";
  }
  write_file_atomic((fs::path(out) / "triples.tsv").string(), kb.kg.triples_tsv());
  write_file_atomic((fs::path(out) / "labels.tsv").string(), kb.kg.labels_tsv());
  write_file_atomic((fs::path(out) / "relations.tsv").string(), relations);
  write_file_atomic((fs::path(out) / "catalog.tsv").string(), kb.catalog.export_tsv());
  std::cout << "wrote " << out << ": entities=" << kb.kg.entity_count()
            << " relations=" << kb.kg.relation_count() << " triples=" << kb.kg.triple_count()
            << " surfaces=" << kb.catalog.surface_count()
            << " unlabeled=" << kb.unlabeled_entities << '\n';
  return 0;
}

int cmd_gen_data(const Options& o) {
  const std::string& out = need(o.out, "--out");
  const std::uint64_t seed = effective_seed(o.seed);
  std::vector<KgProfile> profiles;
  if (o.profile.empty() || o.profile == "both") {
    profiles = {KgProfile::kMovieA, KgProfile::kMovieB};
  } else {
    profiles = {parse_profile(o.profile)};
  }
  std::vector<std::vector<DatasetRecord>> corpora;
  for (KgProfile p : profiles) {
    const fs::path dir = fs::path(out) / profile_name(p);
    const GeneratedKg gen = gen_kg(p, seed);
    write_kg((dir / "kg").string(), gen, seed);
    auto records = gen_questions(gen, seed);
    assign_splits(records, 0.8, 0.1, seed);
    write_dataset((dir / "all.jsonl").string(), records);
    for (const char* split : {"train", "valid", "test"}) {
      write_dataset((dir / (std::string(split) + ".jsonl")).string(), filter_split(records, split));
    }
    std::cout << profile_name(p) << ": records=" << records.size() << " dir=" << dir.string() << '\n';
    corpora.push_back(std::move(records));
  }
  if (corpora.size() == 2) {
    const double overlap = vocabulary_overlap(corpora[0], corpora[1]);
    std::cout << "question vocabulary overlap=" << fmt(overlap) << '\n';
    if (overlap < 0.5) {
      throw DataError("question vocabularies overlap by " + fmt(overlap) + " (< 0.5)");
    }
  }
  return 0;
}

int cmd_train(const Options& o) {
  const RunConfig rc = resolve(o);
  log(rc.describe());
  const KgBundle kb = load_kg_dir(need_at(o.kg, 0, "--kg"));
  const auto records = read_dataset(need_at(o.dataset, 0, "--dataset"));
  const std::string& ckpt = need(o.ckpt, "--ckpt");

  std::vector<DatasetRecord> train_recs = filter_split(records, "train");
  std::vector<DatasetRecord> valid_recs = filter_split(records, "valid");
  if (train_recs.empty()) train_recs = records;

  std::optional<ParserModel> model;
  if (!o.init.empty()) {
    model.emplace(ParserModel::load(o.init));
    log("fine-tuning from " + o.init);
  } else {
    std::vector<DatasetRecord> corpus = records;
    for (const auto& path : o.vocab_from) {
      auto extra = read_dataset(path);
      corpus.insert(corpus.end(), extra.begin(), extra.end());
    }
    std::vector<KgBundle> extra_kbs;
    for (std::size_t i = 1; i < o.kg.size(); ++i) extra_kbs.push_back(load_kg_dir(o.kg[i]));
    std::vector<const RelationCatalog*> cats{&kb.catalog};
    for (const auto& e : extra_kbs) cats.push_back(&e.catalog);
    model.emplace(rc.model, make_vocab(corpus, cats));
  }
  const ModelConfig& limits = model->config();
  auto report_rejects = [](const char* what, const PreprocessResult& p) {
    for (const auto& [reason, n] : p.rejected) {
      log(std::string(what) + ": rejected " + std::to_string(n) + " records (" + reason + ")");
    }
  };
  const auto tr = preprocess(train_recs, kb.catalog, model->vocab(), limits);
  const auto va = preprocess(valid_recs, kb.catalog, model->vocab(), limits);
  report_rejects("train", tr);
  report_rejects("valid", va);
  log("training on " + std::to_string(tr.examples.size()) + " examples, validating on " +
      std::to_string(va.examples.size()) + ", " + std::to_string(model->parameter_count()) +
      " parameters");
  const TrainConfig& tc = o.init.empty() ? rc.train : rc.finetune;
  const TrainResult res = train(*model, tr.examples, va.examples, kb.catalog, tc, [](const EpochLog& e) {
    log("epoch " + std::to_string(e.epoch) + " loss=" + fmt(e.train_loss) +
        " valid_accuracy=" + fmt(e.valid_score) + " exact=" + std::to_string(e.valid.exact_sequences) +
        "/" + std::to_string(e.valid.sequences) + " seconds=" + fmt(e.seconds));
  });
  model->save(ckpt);
  std::cout << "trained: best_epoch=" << res.best_epoch << " valid_accuracy=" << fmt(res.best_score)
            << " examples=" << tr.examples.size() << " ckpt=" << ckpt << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig rc = resolve(o);
  log(rc.describe());
  const ParserModel model = load_model(o, rc);
  const KgBundle kb = load_kg_dir(need_at(o.kg, 0, "--kg"));
  const auto records = split_or_all(read_dataset(need_at(o.dataset, 0, "--dataset")), o.split);
  const Evaluation ev = evaluate(records, model, kb);
  print_metrics("", ev.overall);
  for (const auto& [cat, m] : ev.by_category) print_metrics("category=" + cat + " ", m);
  if (!o.out.empty()) {
    ExperimentReport rep;
    rep.name = "eval";
    rep.config = model.config().to_pairs();
    rep.seed = rc.seed;
    rep.dataset_hashes = {{"dataset", dataset_hash(records)}};
    rep.columns = {"category", "questions", "precision", "recall", "f1", "hits_at_1"};
    auto row = [&](const std::string& name, const Metrics& m) {
      rep.rows.push_back({name, std::to_string(m.per_question.size()), fmt(m.precision),
                          fmt(m.recall), fmt(m.f1), fmt(m.hits_at_1)});
    };
    row("all", ev.overall);
    for (const auto& [cat, m] : ev.by_category) row(cat, m);
    log("report: " + rep.write(o.out));
  }
  return 0;
}

int cmd_ask(const Options& o) {
  const RunConfig rc = resolve(o);
  const ParserModel model = load_model(o, rc);
  const KgBundle kb = load_kg_dir(need_at(o.kg, 0, "--kg"));
  if (o.questions.empty()) throw Error(ErrorKind::kUsage, "ask needs a question");
  const RelationMatrix rel = model.encode_relations(kb.catalog);
  GrounderConfig gc;
  gc.execute_all = o.trace;
  for (const auto& q : o.questions) {
    const GroundingContext ctx = make_context(kb.kg, kb.catalog, q);
    const GroundingOutcome out = answer(q, model, rel, ctx, gc);
    std::cout << "question: " << q << '\n';
    if (out.unanswered) {
      std::cout << "answer: (unanswered: " << out.failure << ")\n";
    } else {
      std::string joined;
      for (const auto& l : answer_labels(out.answer, kb.kg)) joined += (joined.empty() ? "" : "; ") + l;
      std::cout << "answer: " << (out.flagged_empty ? "(empty, flagged)" : joined) << '\n';
      std::cout << "sparql: " << print_sparql(*out.chosen_query(), kb.kg) << '\n';
    }
    if (o.trace) std::cout << "trace: " << trace_json(q, out, kb.kg, kb.catalog) << '\n';
  }
  return 0;
}

std::vector<int> parse_grid(const std::string& text) {
  std::vector<int> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      const int n = std::stoi(item);
      if (n < 0) throw std::invalid_argument(item);
      grid.push_back(n);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kUsage, "--n expects comma-separated non-negative integers");
    }
  }
  if (grid.empty()) throw Error(ErrorKind::kUsage, "--n is empty");
  return grid;
}

int cmd_transfer(const Options& o) {
  const RunConfig rc = resolve(o);
  log(rc.describe());
  const KgBundle source_kb = load_kg_dir(need_at(o.kg, 0, "--kg"));
  const KgBundle target_kb = load_kg_dir(need_at(o.kg, 1, "--kg"));
  const auto source = read_dataset(need_at(o.dataset, 0, "--dataset"));
  const auto target = read_dataset(need_at(o.dataset, 1, "--dataset"));
  const auto pool = filter_category(filter_split(target, "train"), "2-hop");
  const auto test = filter_category(filter_split(target, "test"), "2-hop");

  TransferSetup setup;
  setup.model = rc.model;
  setup.pretrain = rc.train;
  setup.finetune = rc.finetune;
  setup.grid = parse_grid(o.n);
  setup.seeds = {rc.seed, rc.seed + 1, rc.seed + 2};
  std::optional<ParserModel> pretrained;
  if (!o.ckpt.empty()) {
    pretrained.emplace(ParserModel::load(o.ckpt));
  } else {
    std::vector<DatasetRecord> corpus = source;
    corpus.insert(corpus.end(), target.begin(), target.end());
    const RelationCatalog* cats[] = {&source_kb.catalog, &target_kb.catalog};
    setup.vocab = make_vocab(corpus, cats).tokens();
  }
  const auto result = run_transfer(setup, pretrained ? &*pretrained : nullptr,
                                   filter_split(source, "train"), filter_split(source, "valid"),
                                   source_kb, pool, test, target_kb, log);
  std::cout << "n,seed,pretrained_hits_at_1,scratch_hits_at_1\n";
  for (const auto& row : result.report.rows) {
    std::cout << row[0] << ',' << row[1] << ',' << row[2] << ',' << row[3] << '\n';
  }
  if (!o.out.empty()) log("report: " + result.report.write(o.out));
  return 0;
}

int cmd_unseen(const Options& o) {
  const RunConfig rc = resolve(o);
  log(rc.describe());
  const KgBundle kb = load_kg_dir(need_at(o.kg, 0, "--kg"));
  const auto records = read_dataset(need_at(o.dataset, 0, "--dataset"));
  UnseenSetup setup;
  setup.model = rc.model;
  setup.train = rc.train;
  setup.excluded.clear();
  std::stringstream ss(o.exclude_paths);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) setup.excluded.push_back(item);
  }
  const auto result = run_unseen(setup, records, kb, log);
  print_metrics("split=seen-dev ", result.seen.overall);
  print_metrics("split=unseen-dev ", result.unseen.overall);
  std::cout << "unseen/seen hits@1 ratio="
            << fmt(result.seen_hits > 0 ? result.unseen_hits / result.seen_hits : 0.0) << '\n';
  if (!o.out.empty()) log("report: " + result.report.write(o.out));
  return 0;
}

int cmd_export_trace(const Options& o) {
  const RunConfig rc = resolve(o);
  const ParserModel model = load_model(o, rc);
  const KgBundle kb = load_kg_dir(need_at(o.kg, 0, "--kg"));
  const auto records = split_or_all(read_dataset(need_at(o.dataset, 0, "--dataset")), o.split);
  const RelationMatrix rel = model.encode_relations(kb.catalog);
  GrounderConfig gc;
  gc.execute_all = true;
  std::string content;
  for (const auto& r : records) {
    const GroundingContext ctx = make_context(kb.kg, kb.catalog, r.question);
    content += trace_json(r.question, answer(r.question, model, rel, ctx, gc), kb.kg, kb.catalog);
    content += '\n';
  }
  write_file_atomic(need(o.out, "--out"), content);
  std::cout << "wrote " << records.size() << " traces to " << o.out << '\n';
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return 1;
    case ErrorKind::kData: return 2;
    case ErrorKind::kRuntime: return 3;
  }
  return 3;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kData: return "data";
    case ErrorKind::kRuntime: return "runtime";
  }
  return "runtime";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage knowledge-graph question answering"};
  app.require_subcommand(1);
  Options o;

  auto kg = [&](CLI::App* c, const char* help) { c->add_option("--kg", o.kg, help); };
  auto dataset = [&](CLI::App* c, const char* help) { c->add_option("--dataset", o.dataset, help); };
  auto seed = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Random seed (STAG_SEED overrides)");
  };
  auto config = [&](CLI::App* c) {
    c->add_option("--config", o.config, "key=value file with model/training settings");
  };
  auto inference = [&](CLI::App* c) {
    c->add_option("--ckpt", o.ckpt, "Model checkpoint");
    c->add_option("--beam", o.beam, "Beam width");
    c->add_option("--shortlist", o.shortlist, "Surfaces kept per relation placeholder");
  };

  auto* build = app.add_subcommand("build-kg", "Validate and normalize a KG, or generate a synthetic one");
  kg(build, "Triples TSV (subject, predicate, object)");
  build->add_option("--labels", o.labels, "Entity labels TSV");
  build->add_option("--catalog", o.catalog, "Relation labels TSV (relation IRI, surface)");
  build->add_option("--profile", o.profile, "Generate movie-A or movie-B instead of loading");
  build->add_option("--out", o.out, "Output directory");
  seed(build);

  auto* gen = app.add_subcommand("gen-data", "Generate synthetic KGs and question datasets");
  gen->add_option("--profile", o.profile, "movie-A, movie-B or both (default)");
  gen->add_option("--out", o.out, "Output directory");
  seed(gen);

  auto* tr = app.add_subcommand("train", "Train the sketch parser");
  kg(tr, "KG directory; further --kg directories only extend the vocabulary");
  dataset(tr, "Dataset JSONL (train/valid splits used when present)");
  tr->add_option("--ckpt", o.ckpt, "Checkpoint to write");
  tr->add_option("--init", o.init, "Checkpoint to fine-tune from");
  tr->add_option("--vocab-from", o.vocab_from, "Extra datasets contributing vocabulary");
  tr->add_option("--epochs", o.epochs, "Maximum epochs");
  tr->add_option("--lr", o.lr, "Learning rate");
  seed(tr);
  config(tr);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  kg(ev, "KG directory");
  dataset(ev, "Dataset JSONL");
  ev->add_option("--split", o.split, "Only records of this split");
  ev->add_option("--out", o.out, "Directory for the JSON/CSV report");
  inference(ev);
  seed(ev);
  config(ev);

  auto* ask = app.add_subcommand("ask", "Answer questions");
  kg(ask, "KG directory");
  ask->add_option("question", o.questions, "Question text")->required();
  ask->add_flag("--trace", o.trace, "Print the full candidate trace");
  inference(ask);

  auto* tx = app.add_subcommand("transfer-exp", "Low-resource transfer curve (source then target)");
  kg(tx, "Source KG directory, then target KG directory");
  dataset(tx, "Source dataset, then target dataset");
  tx->add_option("--ckpt", o.ckpt, "Pretrained source checkpoint (trained when absent)");
  tx->add_option("--n", o.n, "Comma-separated target training sizes");
  tx->add_option("--out", o.out, "Directory for the JSON/CSV report");
  tx->add_option("--epochs", o.epochs, "Maximum pretraining epochs");
  tx->add_option("--lr", o.lr, "Pretraining learning rate");
  seed(tx);
  config(tx);

  auto* un = app.add_subcommand("unseen-exp", "Unseen path-composition challenge");
  kg(un, "KG directory");
  dataset(un, "Dataset JSONL");
  un->add_option("--exclude-paths", o.exclude_paths, "Comma-separated path signatures");
  un->add_option("--out", o.out, "Directory for the JSON/CSV report");
  un->add_option("--epochs", o.epochs, "Maximum epochs");
  un->add_option("--lr", o.lr, "Learning rate");
  seed(un);
  config(un);

  auto* et = app.add_subcommand("export-trace", "Write one JSON trace line per dataset question");
  kg(et, "KG directory");
  dataset(et, "Dataset JSONL");
  et->add_option("--split", o.split, "Only records of this split");
  et->add_option("--out", o.out, "Output JSONL file");
  inference(et);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << '\n' << app.help();
    return 1;
  }

  try {
    if (*build) return cmd_build_kg(o);
    if (*gen) return cmd_gen_data(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*ask) return cmd_ask(o);
    if (*tx) return cmd_transfer(o);
    if (*un) return cmd_unseen(o);
    if (*et) return cmd_export_trace(o);
  } catch (const Error& e) {
    std::cerr << "error[" << kind_name(e.kind()) << "]: " << e.what() << '\n';
    if (e.kind() == ErrorKind::kUsage && !app.get_subcommands().empty()) {
      std::cerr << app.get_subcommands().front()->help();
    }
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[runtime]: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error[runtime]: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
