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


// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Progress goes to stderr.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kbqa/data.hpp"
#include "kbqa/error.hpp"
#include "kbqa/executor.hpp"
#include "kbqa/grounder.hpp"
#include "kbqa/query_ir.hpp"
#include "kbqa/train_eval.hpp"
#include "support/grad_check.hpp"
#include "support/metrics_fixture.hpp"
#include "support/random_queries.hpp"
#include "support/tiny_world.hpp"

namespace kbqa {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void progress(const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); }

// ---------------------------------------------------------------------------

Verdict executor_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20261);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = testing::random_graph(rng, testing::uniform(rng, 3, 30),
                                         testing::uniform(rng, 1, 6), testing::uniform(rng, 0, 200));
    const auto kg = g.build();
    const auto q = testing::random_grounded_query(rng, g);
    mismatches += !(execute(q, kg) == testing::nested_loop_oracle(q, g.triples));
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 30.0,
          std::to_string(mismatches) + "/1000 mismatches in " + fmt("%.2f s", secs)};
}

Verdict ir_round_trip() {
  std::mt19937_64 rng(20262);
  int round_trip_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto s = testing::random_skeleton(rng);
    const auto back = try_parse(serialize(s));
    round_trip_failures += !(back && *back == s);
  }
  std::vector<std::string> rel_iris, ent_iris;
  for (int i = 0; i < kMaxProps; ++i) rel_iris.push_back("http://example.org/p/rel" + std::to_string(i));
  for (int i = 0; i < kMaxEntities; ++i) ent_iris.push_back("http://example.org/e/ent" + std::to_string(i));
  const auto cat = RelationCatalog::build(rel_iris);
  int pair_failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = testing::random_skeleton(rng);
    const std::vector<std::string> order(ent_iris.begin(), ent_iris.begin() + s.entity_count());
    try {
      const auto a = canonicalize_gold(testing::render_sparql(s, ent_iris, rel_iris, rng), order, cat);
      const auto b = canonicalize_gold(testing::render_sparql(s, ent_iris, rel_iris, rng), order, cat);
      pair_failures += !(a.skeleton == b.skeleton && a.relation_iris == b.relation_iris &&
                         a.skeleton == s);
    } catch (const Error&) {
      ++pair_failures;
    }
  }
  return {round_trip_failures == 0 && pair_failures == 0,
          std::to_string(round_trip_failures) + "/10000 round-trip failures, " +
              std::to_string(pair_failures) + "/1000 alpha-renamed pair failures"};
}

Verdict gradient_check() {
  const auto& w = testing::tiny_world();
  ModelConfig c = testing::tiny_config();
  c.d_model = 16;
  ParserModel model(c, w.vocab);
  std::mt19937_64 rng(20263);
  double worst = 0.0;
  std::size_t coords = 0;
  for (int b = 0; b < 20; ++b) {
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(w.examples[rng() % w.examples.size()]);
    const auto r = testing::check_joint_loss_gradient(model, batch, w.kb.catalog, rng);
    worst = std::max(worst, r.max_relative_error);
    coords += r.coordinates;
  }
  return {worst <= 1e-4, "max relative error " + fmt("%.3e", worst) + " over " +
                             std::to_string(coords) + " coordinates, 20 batches, d_model=16"};
}

// Shared state for the experiment criteria.
struct World {
  GeneratedKg gen_a, gen_b;
  KgBundle kb_a, kb_b;
  std::vector<DatasetRecord> rec_a, rec_b;
  TokenVocab vocab;
  ModelConfig model;
  TrainConfig train;
};

World make_world() {
  World w;
  w.gen_a = gen_kg(KgProfile::kMovieA, 1);
  w.gen_b = gen_kg(KgProfile::kMovieB, 1);
  w.kb_a = {w.gen_a.build_kg(), w.gen_a.build_catalog(), 0};
  w.kb_b = {w.gen_b.build_kg(), w.gen_b.build_catalog(), 0};
  w.rec_a = gen_questions(w.gen_a, 1);
  w.rec_b = gen_questions(w.gen_b, 2);
  assign_splits(w.rec_a, 0.8, 0.1, 1);
  std::vector<DatasetRecord> both = w.rec_a;
  both.insert(both.end(), w.rec_b.begin(), w.rec_b.end());
  const RelationCatalog* cats[] = {&w.kb_a.catalog, &w.kb_b.catalog};
  w.vocab = make_vocab(both, cats);
  w.model.d_model = 32;
  w.model.ff_dim = 64;
  w.train.epochs = 40;
  return w;
}

Verdict full_data_accuracy(const World& w, std::optional<ParserModel>& trained) {
  const auto t0 = Clock::now();
  const auto tr = preprocess(filter_split(w.rec_a, "train"), w.kb_a.catalog, w.vocab, w.model);
  const auto va = preprocess(filter_split(w.rec_a, "valid"), w.kb_a.catalog, w.vocab, w.model);
  trained.emplace(w.model, w.vocab);
  train(*trained, tr.examples, va.examples, w.kb_a.catalog, w.train, [](const EpochLog& e) {
    progress("epoch " + std::to_string(e.epoch) + " valid_accuracy=" + fmt("%.4f", e.valid_score));
  });
  const auto test = filter_split(w.rec_a, "test");
  const auto ev = evaluate(test, *trained, w.kb_a);
  const double secs = seconds_since(t0);
  auto hits = [&](const char* cat) {
    const auto it = ev.by_category.find(cat);
    return it == ev.by_category.end() ? 0.0 : it->second.hits_at_1;
  };
  const double h1 = hits("1-hop"), h2 = hits("2-hop"), h3 = hits("3-hop");
  return {h1 >= 0.95 && h2 >= 0.95 && h3 >= 0.90 && secs <= 1200.0,
          "Hits@1 1-hop " + fmt("%.4f", h1) + ", 2-hop " + fmt("%.4f", h2) + ", 3-hop " +
              fmt("%.4f", h3) + " on " + std::to_string(test.size()) + " test questions (" +
              std::to_string(tr.examples.size()) + " train), " + fmt("%.0f s", secs)};
}

Verdict unseen_composition(const World& w) {
  UnseenSetup setup;
  setup.model = w.model;
  setup.train = w.train;
  setup.vocab = w.vocab.tokens();
  const auto r = run_unseen(setup, w.rec_a, w.kb_a, progress);
  const bool ok = r.seen_hits >= 0.90 && r.unseen_hits >= 0.95 * r.seen_hits;
  return {ok, "seen-dev Hits@1 " + fmt("%.4f", r.seen_hits) + " (" +
                  std::to_string(r.seen.overall.per_question.size()) + "), unseen-dev " +
                  fmt("%.4f", r.unseen_hits) + " (" +
                  std::to_string(r.unseen.overall.per_question.size()) + "), ratio " +
                  fmt("%.4f", r.seen_hits > 0 ? r.unseen_hits / r.seen_hits : 0.0)};
}

TransferResult transfer(const World& w, const ParserModel& pretrained) {
  auto target = filter_category(w.rec_b, "2-hop");
  assign_splits(target, 0.7, 0.0, 5);
  const auto pool = filter_split(target, "train");
  const auto test = filter_split(target, "test");
  TransferSetup setup;
  setup.model = w.model;
  setup.finetune = w.train;
  setup.grid = {0, 100, 500};
  setup.seeds = {1, 2, 3};
  setup.vocab = w.vocab.tokens();
  return run_transfer(setup, &pretrained, {}, {}, w.kb_a, pool, test, w.kb_b, progress);
}

Verdict transfer_curve(const TransferResult& r) {
  const double p100 = 100 * r.mean_pretrained(100);
  const double s100 = 100 * r.mean_scratch(100);
  const double s500 = 100 * r.mean_scratch(500);
  return {p100 >= s100 + 10 && p100 >= s500 - 2,
          "mean Hits@1 over 3 seeds: pretrained-100 " + fmt("%.2f", p100) + ", scratch-100 " +
              fmt("%.2f", s100) + ", scratch-500 " + fmt("%.2f", s500)};
}

Verdict zero_shot(const TransferResult& r) {
  const double zs = 100 * r.mean_pretrained(0);
  const double untrained = 100 * r.mean_scratch(0);
  return {zs > untrained + 5, "zero-shot Hits@1 " + fmt("%.2f", zs) + " vs untrained " +
                                  fmt("%.2f", untrained)};
}

Verdict grounding_rank_rule() {
  const std::vector<std::string> iris{"ex/directed_by", "ex/in_language"};
  const EntityId alice{0}, film{1}, english{2};
  const KnowledgeGraph kg = KnowledgeGraph::build(
      {{"ex/alice", "alice"}, {"ex/film", "film"}, {"ex/english", "english"}}, iris,
      {{film, RelationId{0}, alice}, {film, RelationId{1}, english}});
  auto q = [](QueryForm form, GroundedTerm s, std::uint32_t p, GroundedTerm o, double score) {
    GroundedQuery g;
    g.form = form;
    if (form != QueryForm::kAsk) g.projection = 0;
    g.patterns = {{s, RelationId{p}, o}};
    g.score = score;
    return g;
  };
  const auto v = GroundedTerm::variable(0);
  auto c = [](EntityId e) { return GroundedTerm::constant(e); };

  // Top SELECT is empty; the lower-scored one holds the film.
  const auto sel = select_answer({q(QueryForm::kSelect, v, 1, c(alice), 0.8),
                                  q(QueryForm::kSelect, v, 0, c(alice), 0.2)},
                                 kg);
  const bool select_ok = sel.chosen == 1u && sel.answer == AnswerSet::of_entities({film}) &&
                         !sel.flagged_empty;
  // Top ASK is false; a lower ASK would be true.
  const auto ask = select_answer({q(QueryForm::kAsk, c(alice), 0, c(film), 0.7),
                                  q(QueryForm::kAsk, c(film), 0, c(alice), 0.3)},
                                 kg);
  const bool ask_ok = ask.chosen == 0u && ask.answer == AnswerSet::of_boolean(false);
  const auto ask_true = select_answer({q(QueryForm::kAsk, c(film), 1, c(english), 0.9),
                                       q(QueryForm::kAsk, c(alice), 1, c(english), 0.1)},
                                      kg);
  const bool ask_true_ok = ask_true.chosen == 0u && ask_true.answer == AnswerSet::of_boolean(true);
  return {select_ok && ask_ok && ask_true_ok,
          std::string("empty top SELECT skipped: ") + (select_ok ? "yes" : "no") +
              ", top ASK boolean returned: " + (ask_ok && ask_true_ok ? "yes" : "no")};
}

Verdict metric_suite() {
  std::vector<QuestionResult> results;
  double worst = 0.0;
  bool hits_ok = true;
  for (const auto& m : testing::metrics_micro_fixture()) {
    const auto r = score_question(m.predicted, m.gold, m.exact, m.flagged_empty);
    worst = std::max({worst, std::abs(r.precision - m.precision), std::abs(r.recall - m.recall),
                      std::abs(r.f1 - m.f1)});
    hits_ok = hits_ok && r.hit == m.hit;
    results.push_back(r);
  }
  const auto agg = aggregate(results);
  worst = std::max({worst, std::abs(agg.precision - testing::kMicroPrecision),
                    std::abs(agg.recall - testing::kMicroRecall),
                    std::abs(agg.f1 - testing::kMicroF1),
                    std::abs(agg.hits_at_1 - testing::kMicroHits)});
  return {worst <= 1e-12 && hits_ok, "max deviation " + fmt("%.1e", worst) + " on 5 questions"};
}

}  // namespace
}  // namespace kbqa

int main() {
  using namespace kbqa;
  int failed = 0;
  auto report = [&](int id, const char* name, const Verdict& v) {
    std::printf("criterion %d %s: %s (%s)\n", id, v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  };
  auto guarded = [](const std::function<Verdict()>& f) -> Verdict {
    try {
      return f();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "executor oracle equivalence", guarded(executor_oracle));
  report(2, "IR round trip", guarded(ir_round_trip));
  report(3, "joint loss gradient", guarded(gradient_check));

  std::fprintf(stderr, "generating movie-A and movie-B corpora\n");
  const World world = make_world();
  std::optional<ParserModel> movie_a;
  std::fprintf(stderr, "training movie-A model\n");
  report(4, "full-data accuracy", guarded([&] { return full_data_accuracy(world, movie_a); }));
  std::fprintf(stderr, "unseen-composition run\n");
  report(5, "unseen composition", guarded([&] { return unseen_composition(world); }));

  std::optional<TransferResult> tr;
  std::string transfer_error;
  if (movie_a) {
    std::fprintf(stderr, "transfer runs\n");
    try {
      tr = transfer(world, *movie_a);
    } catch (const std::exception& e) {
      transfer_error = e.what();
    }
  } else {
    transfer_error = "no movie-A model";
  }
  if (tr) {
    report(6, "transfer curve", transfer_curve(*tr));
    report(7, "zero-shot transfer", zero_shot(*tr));
  } else {
    report(6, "transfer curve", {false, transfer_error});
    report(7, "zero-shot transfer", {false, transfer_error});
  }

  report(8, "grounding rank rule", guarded(grounding_rank_rule));
  report(9, "metric micro-fixture", guarded(metric_suite));

  std::printf("%d of 9 criteria passed\n", 9 - failed);
  return failed == 0 ? 0 : 1;
}
