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


#include "kbqa/parser_model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "kbqa/checkpoint.hpp"
#include "kbqa/data.hpp"
#include "kbqa/error.hpp"
#include "kbqa/optimizer.hpp"
#include "support/grad_check.hpp"
#include "support/tiny_world.hpp"

namespace kbqa {
namespace {

using testing::tiny_config;
using testing::tiny_trained_model;
using testing::tiny_world;

std::vector<int> ids_of(const ParserModel& m, const std::string& question) {
  return m.vocab().encode(tokenize(question));
}

const DatasetRecord& record_with_signature(const std::string& signature) {
  for (const auto& r : tiny_world().records) {
    if (r.path_signature == signature && record_category(r) != "ask" && record_category(r) != "count") return r;
  }
  throw std::runtime_error("fixture lacks " + signature);
}

TEST(ModelConfig, ValidatesSizes) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = ModelConfig{};
  c.beam = 0;
  EXPECT_THROW(c.validate(), Error);
  c = ModelConfig{};
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(ModelConfig, PairsRoundTripThroughApply) {
  ModelConfig c = tiny_config();
  c.shortlist = 2;
  c.first_token_pooling = true;
  c.link_weight = 0.25;
  ModelConfig d;
  for (const auto& [k, v] : c.to_pairs()) d.apply(k, v);
  EXPECT_EQ(d.to_pairs(), c.to_pairs());
  EXPECT_THROW(d.apply("no_such_key", "1"), Error);
  EXPECT_THROW(d.apply("d_model", "many"), Error);
}

TEST(Encoder, OneStatePerFramedToken) {
  const auto& w = tiny_world();
  const ParserModel m(w.config, w.vocab);
  const auto ids = ids_of(m, "who directed the matrix");
  ASSERT_EQ(ids.size(), 6u);
  const Matrix states = m.encode_question(ids);
  EXPECT_EQ(states.rows, 6u);
  EXPECT_EQ(states.cols, static_cast<std::size_t>(w.config.d_model));
}

TEST(Encoder, RejectsOverlongQuestions) {
  const auto& w = tiny_world();
  ModelConfig c = w.config;
  c.max_question_len = 4;
  const ParserModel m(c, w.vocab);
  EXPECT_THROW(m.encode_question(ids_of(m, "one two three four five")), TooLong);
  EXPECT_NO_THROW(m.encode_question(ids_of(m, "one two three four")));
  const RelationMatrix rel = m.encode_relations(w.kb.catalog);
  EXPECT_THROW(m.infer("one two three four five", rel), TooLong);
}

TEST(Encoder, IsPositionSensitive) {
  const auto& w = tiny_world();
  const ParserModel m(w.config, w.vocab);
  const Matrix a = m.encode_question(ids_of(m, "who directed the film"));
  const Matrix b = m.encode_question(ids_of(m, "film the directed who"));
  // Same multiset of tokens; a bag-of-words encoder would give equal means.
  std::vector<double> ma(a.cols), mb(b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t c = 0; c < a.cols; ++c) {
      ma[c] += a(r, c);
      mb[c] += b(r, c);
    }
  }
  double diff = 0;
  for (std::size_t c = 0; c < a.cols; ++c) diff += std::abs(ma[c] - mb[c]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Decoder, StepDistributionsAreNormalizedWithExpectedShape) {
  const auto& w = tiny_world();
  const ParserModel m(w.config, w.vocab);
  const Matrix memory = m.encode_question(w.examples[0].question);
  const auto& target = w.examples[0].target;
  const Matrix probs = m.teacher_forced_probs(target, memory);
  EXPECT_EQ(probs.rows, target.size() - 1);
  EXPECT_EQ(probs.cols, kSkeletonVocabSize);
  for (std::size_t r = 0; r < probs.rows; ++r) {
    double s = 0;
    for (double p : probs.row(r)) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Decoder, UntrainedEntropyIsNearUniform) {
  const auto& w = tiny_world();
  const ParserModel m(w.config, w.vocab);
  const Matrix memory = m.encode_question(w.examples[3].question);
  const std::vector<SkelTok> prefix{SkelTok::kBos};
  const auto step = m.decode_step(prefix, memory);
  double h = 0;
  for (double p : step.probs) h -= p > 0 ? p * std::log(p) : 0.0;
  const double uniform = std::log(static_cast<double>(kSkeletonVocabSize));
  EXPECT_GT(h, 0.9 * uniform);
  EXPECT_LE(h, uniform + 1e-12);
}

TEST(Decoder, FutureTokensDoNotAffectEarlierSteps) {
  const auto& w = tiny_world();
  const ParserModel m(w.config, w.vocab);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto& ex = w.examples[rng() % w.examples.size()];
    const Matrix memory = m.encode_question(ex.question);
    const Matrix base = m.teacher_forced_probs(ex.target, memory);
    const std::size_t cut = 1 + rng() % (ex.target.size() - 1);
    auto perturbed = ex.target;
    for (std::size_t i = cut; i < perturbed.size(); ++i) {
      perturbed[i] = static_cast<SkelTok>(rng() % kSkeletonVocabSize);
    }
    const Matrix other = m.teacher_forced_probs(perturbed, memory);
    for (std::size_t r = 0; r < cut; ++r) {
      for (std::size_t c = 0; c < base.cols; ++c) ASSERT_EQ(base(r, c), other(r, c)) << r;
    }
  }
}

TEST(Decoder, IncrementalStepsMatchTeacherForcing) {
  const auto& w = tiny_world();
  const ParserModel m(w.config, w.vocab);
  const auto& ex = w.examples[7];
  const Matrix memory = m.encode_question(ex.question);
  const Matrix full = m.teacher_forced_probs(ex.target, memory);
  for (std::size_t i = 1; i < ex.target.size(); ++i) {
    const auto step = m.decode_step(std::span(ex.target).first(i), memory);
    ASSERT_EQ(step.hidden.size(), static_cast<std::size_t>(w.config.d_model));
    for (std::size_t c = 0; c < kSkeletonVocabSize; ++c) {
      EXPECT_NEAR(step.probs[c], full(i - 1, c), 1e-12);
    }
  }
}

TEST(RelationEncoder, RowsDependOnSurfaceText) {
  const auto& w = tiny_world();
  const ParserModel m(w.config, w.vocab);
  const std::vector<std::string> a_iris{"x/directed_by", "x/in_language"};
  const std::vector<std::string> b_iris{"y/directed_by", "y/has_genre"};
  const std::vector<std::string> c_iris{"z/by_directed"};
  const auto ra = m.encode_relations(RelationCatalog::build(a_iris));
  const auto rb = m.encode_relations(RelationCatalog::build(b_iris));
  const auto rc = m.encode_relations(RelationCatalog::build(c_iris));
  // "directed by" is row 0 in both catalogs.
  for (std::size_t c = 0; c < ra.rows.cols; ++c) EXPECT_EQ(ra.rows(0, c), rb.rows(0, c));
  double diff = 0;
  for (std::size_t c = 0; c < ra.rows.cols; ++c) diff += std::abs(ra.rows(0, c) - rc.rows(0, c));
  EXPECT_GT(diff, 1e-6);
  EXPECT_EQ(ra.unknown_tokens, 0u);
  const std::vector<std::string> unk{"q/zzyzx_quux"};
  EXPECT_EQ(m.encode_relations(RelationCatalog::build(unk)).unknown_tokens, 2u);
}

TEST(RelationEncoder, TrainingStepMovesRows) {
  const auto& w = tiny_world();
  ParserModel m(w.config, w.vocab);
  const auto before = m.encode_relations(w.kb.catalog).rows;
  {
    Tape tape;
    const Var rel = m.encode_relations(tape, w.kb.catalog);
    const auto r = m.joint_loss(tape, std::span(w.examples).first(8), rel);
    tape.backward(r.loss);
  }
  const auto params = m.parameters();
  AdamState st;
  adam_step(params, st, AdamConfig{});
  const auto after = m.encode_relations(w.kb.catalog).rows;
  double diff = 0;
  for (std::size_t i = 0; i < after.size(); ++i) diff += std::abs(after.data[i] - before.data[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(JointLoss, SingleSurfaceCatalogHasZeroLinkingLoss) {
  const auto& w = tiny_world();
  ParserModel m(w.config, w.vocab);
  const std::vector<std::string> iris{w.gen.relation_iris[0]};
  const auto cat = RelationCatalog::build(iris, w.gen.relation_labels);
  TrainingExample ex = w.examples[0];
  for (auto& g : ex.gold_surfaces) g = 0;
  Tape tape(false);
  const auto r = m.joint_loss(tape, std::span(&ex, 1), m.encode_relations(tape, cat));
  EXPECT_EQ(r.metrics.linking_ce, 0.0);
  EXPECT_DOUBLE_EQ(r.metrics.linking_accuracy, 1.0);
}

TEST(JointLoss, DuplicatingExamplesKeepsTheMean) {
  const auto& w = tiny_world();
  ParserModel m(w.config, w.vocab);
  std::vector<TrainingExample> one(w.examples.begin(), w.examples.begin() + 3);
  std::vector<TrainingExample> twice = one;
  twice.insert(twice.end(), one.begin(), one.end());
  Tape t1(false), t2(false);
  const double a = m.joint_loss(t1, one, m.encode_relations(t1, w.kb.catalog)).metrics.loss;
  const double b = m.joint_loss(t2, twice, m.encode_relations(t2, w.kb.catalog)).metrics.loss;
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(JointLoss, ZeroLinkWeightEqualsStandaloneTokenCrossEntropy) {
  const auto& w = tiny_world();
  ModelConfig c = w.config;
  c.link_weight = 0.0;
  ParserModel m(c, w.vocab);
  const std::span batch(w.examples.data(), 5);
  double ce = 0;
  std::size_t tokens = 0;
  for (const auto& ex : batch) {
    const Matrix probs = m.teacher_forced_probs(ex.target, m.encode_question(ex.question));
    for (std::size_t i = 1; i < ex.target.size(); ++i) {
      ce -= std::log(probs(i - 1, static_cast<std::size_t>(ex.target[i])));
      ++tokens;
    }
  }
  Tape tape(false);
  const auto r = m.joint_loss(tape, batch, m.encode_relations(tape, w.kb.catalog));
  EXPECT_NEAR(r.metrics.loss, ce / static_cast<double>(tokens), 1e-10);
  EXPECT_GT(r.metrics.linking_ce, 0.0);
}

TEST(JointLoss, GradientMatchesFiniteDifferences) {
  const auto& w = tiny_world();
  ModelConfig c = tiny_config();
  c.d_model = 8;
  c.ff_dim = 12;
  ParserModel m(c, w.vocab);
  std::mt19937_64 rng(31);
  for (int b = 0; b < 3; ++b) {
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(w.examples[rng() % w.examples.size()]);
    const auto res = testing::check_joint_loss_gradient(m, batch, w.kb.catalog, rng, 3);
    EXPECT_LE(res.max_relative_error, 1e-4);
    EXPECT_GT(res.coordinates, 50u);
  }
}

std::vector<SkelTok> greedy(const ParserModel& m, const Matrix& memory) {
  std::vector<SkelTok> seq{SkelTok::kBos};
  while (seq.back() != SkelTok::kEos &&
         seq.size() < static_cast<std::size_t>(m.config().max_skeleton_len)) {
    const auto step = m.decode_step(seq, memory);
    const auto best = std::max_element(step.probs.begin(), step.probs.end()) - step.probs.begin();
    seq.push_back(static_cast<SkelTok>(best));
  }
  return seq;
}

TEST(BeamSearch, WidthOneIsGreedy) {
  const auto& m = tiny_trained_model();
  const auto& w = tiny_world();
  for (std::size_t i = 0; i < w.examples.size(); i += 37) {
    const Matrix memory = m.encode_question(w.examples[i].question);
    const auto beams = m.beam_search(memory, 1);
    const auto g = greedy(m, memory);
    if (g.back() != SkelTok::kEos) {
      EXPECT_TRUE(beams.empty());
      continue;
    }
    ASSERT_EQ(beams.size(), 1u);
    EXPECT_EQ(beams[0].tokens, g);
  }
}

TEST(BeamSearch, LogProbMatchesTeacherForcing) {
  const auto& m = tiny_trained_model();
  const auto& w = tiny_world();
  const Matrix memory = m.encode_question(w.examples[11].question);
  for (const auto& beam : m.beam_search(memory, 4)) {
    const Matrix probs = m.teacher_forced_probs(beam.tokens, memory);
    double lp = 0;
    for (std::size_t i = 1; i < beam.tokens.size(); ++i) {
      lp += std::log(probs(i - 1, static_cast<std::size_t>(beam.tokens[i])));
    }
    EXPECT_NEAR(beam.logprob, lp, 1e-9);
  }
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= z;
  return p;
}

TEST(Infer, WidthOneShortlistOneGivesOneRecomputableCandidate) {
  const auto& w = tiny_world();
  ParserModel m = tiny_trained_model();
  m.mutable_config().beam = 1;
  m.mutable_config().shortlist = 1;
  const auto rel = m.encode_relations(w.kb.catalog);
  const auto& rec = record_with_signature("directed_by>in_language");
  const auto cands = m.infer(rec.question, rel);
  ASSERT_EQ(cands.size(), 1u);
  const auto& c = cands[0];
  const Matrix probs = m.teacher_forced_probs(c.tokens, m.encode_question(ids_of(m, rec.question)));
  double seq = 1.0;
  for (std::size_t i = 1; i < c.tokens.size(); ++i) seq *= probs(i - 1, static_cast<std::size_t>(c.tokens[i]));
  double expected = seq;
  ASSERT_EQ(c.link_logits.size(), static_cast<std::size_t>(c.skeleton.prop_count()));
  for (std::size_t k = 0; k < c.link_logits.size(); ++k) {
    const auto p = softmax(c.link_logits[k]);
    expected *= p[c.chosen[k]];
    EXPECT_EQ(c.chosen[k], static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
  }
  EXPECT_NEAR(c.joint_score, expected, 1e-12);
}

TEST(Infer, CandidatesAreSortedAndLinkDistributionsNormalized) {
  const auto& w = tiny_world();
  const auto& m = tiny_trained_model();
  const auto rel = m.encode_relations(w.kb.catalog);
  for (std::size_t i = 0; i < w.records.size(); i += 23) {
    const auto cands = m.infer(w.records[i].question, rel);
    ASSERT_FALSE(cands.empty());
    EXPECT_LE(cands.size(), static_cast<std::size_t>(m.config().candidate_cap));
    for (std::size_t j = 1; j < cands.size(); ++j) {
      EXPECT_GE(cands[j - 1].joint_score, cands[j].joint_score);
    }
    for (const auto& c : cands) {
      EXPECT_GT(c.joint_score, 0.0);
      EXPECT_LE(c.joint_score, 1.0);
      for (std::size_t k = 0; k < c.link_logits.size(); ++k) {
        const auto p = softmax(c.link_logits[k]);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
        EXPECT_LE(c.ranked_surfaces[k].size(), static_cast<std::size_t>(m.config().shortlist));
        for (std::size_t r = 0; r < c.ranked_surfaces[k].size(); ++r) {
          EXPECT_NEAR(c.ranked_surfaces[k][r].prob, p[c.ranked_surfaces[k][r].surface], 1e-12);
        }
      }
    }
  }
}

TEST(Infer, TrainedModelRecoversTwoHopSketch) {
  const auto& w = tiny_world();
  const auto& m = tiny_trained_model();
  const auto& rec = record_with_signature("directed_by>in_language");
  const auto cands = m.infer(rec.question, m.encode_relations(w.kb.catalog));
  ASSERT_FALSE(cands.empty());
  EXPECT_EQ(tokens_to_string(cands[0].tokens),
            "BOS SELECT VAR0 OPEN VAR1 PROP0 ENT0 DOT VAR1 PROP1 VAR0 DOT CLOSE EOS");
  const auto& cat = w.kb.catalog;
  const auto directed = cat.surface_of(*cat.find_relation(w.gen.relation_iris[0]));
  const auto language = cat.surface_of(*cat.find_relation(w.gen.relation_iris[3]));
  EXPECT_EQ(cands[0].chosen, (std::vector<std::size_t>{directed, language}));
}

TEST(Infer, UntrainedModelMayFindNoValidSkeleton) {
  const auto& w = tiny_world();
  ModelConfig c = w.config;
  c.beam = 1;
  c.max_skeleton_len = 3;  // too short for any valid skeleton
  const ParserModel m(c, w.vocab);
  EXPECT_THROW(m.infer(w.records[0].question, m.encode_relations(w.kb.catalog)), NoValidSkeleton);
}

TEST(Transfer, ModelRunsUnchangedAgainstAnotherCatalog) {
  const auto& w = tiny_world();
  const auto& m = tiny_trained_model();
  const auto other = gen_kg(KgProfile::kMovieB, 21);
  const auto cat_b = other.build_catalog();
  const auto rel_b = m.encode_relations(cat_b);
  EXPECT_EQ(rel_b.rows.rows, cat_b.surface_count());
  std::size_t produced = 0;
  for (std::size_t i = 0; i < w.records.size(); i += 31) {
    try {
      const auto cands = m.infer(w.records[i].question, rel_b);
      produced += cands.size();
      for (const auto& c : cands) {
        for (auto s : c.chosen) EXPECT_LT(s, cat_b.surface_count());
      }
    } catch (const NoValidSkeleton&) {
    }
  }
  EXPECT_GT(produced, 0u);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  const auto& w = tiny_world();
  const auto& m = tiny_trained_model();
  const auto path = (std::filesystem::temp_directory_path() / "kbqa_parser_test.ckpt").string();
  m.save(path);
  const ParserModel back = ParserModel::load(path);
  EXPECT_EQ(back.config().to_pairs(), m.config().to_pairs());
  EXPECT_EQ(back.vocab().tokens(), m.vocab().tokens());
  EXPECT_EQ(back.parameter_count(), m.parameter_count());
  const auto& q = w.records[5].question;
  const auto a = m.infer(q, m.encode_relations(w.kb.catalog));
  const auto b = back.infer(q, back.encode_relations(w.kb.catalog));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tokens, b[i].tokens);
    EXPECT_EQ(a[i].joint_score, b[i].joint_score);
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, LoadRejectsMismatchedParameters) {
  const auto& w = tiny_world();
  Checkpoint ck;
  ck.config = w.config.to_pairs();
  ck.vocab = w.vocab.tokens();
  ck.params = {{"enc.word_emb", Matrix(2, 2)}};
  const auto path = (std::filesystem::temp_directory_path() / "kbqa_bad_model.ckpt").string();
  write_checkpoint(path, ck);
  EXPECT_THROW(ParserModel::load(path), DataError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace kbqa
