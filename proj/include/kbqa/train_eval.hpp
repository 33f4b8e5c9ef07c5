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

#ifndef KBQA_TRAIN_EVAL_HPP_
#define KBQA_TRAIN_EVAL_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kbqa/data.hpp"
#include "kbqa/grounder.hpp"
#include "kbqa/parser_model.hpp"

namespace kbqa {

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 60;
  int batch_size = 16;
  double lr = 2e-3;
  double clip_norm = 1.0;
  int patience = 5;
  std::uint64_t seed = 1;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  LossMetrics valid;
  double valid_score = 0.0;  // early-stopping criterion
  double seconds = 0.0;
};

struct TrainResult {
  int best_epoch = 0;
  double best_score = 0.0;
  double initial_loss = 0.0;  // mean training loss of the first epoch's first batch
  std::vector<EpochLog> history;
  bool stopped_early = false;
};

// Teacher-forced accuracy over all skeleton tokens and placeholder links.
double skeleton_accuracy(const LossMetrics& m);

// Teacher-forced metrics over examples (no dropout, no gradients).
LossMetrics measure(const ParserModel& model, std::span<const TrainingExample> examples,
                    const RelationCatalog& catalog);

// Seeded minibatch Adam with early stopping on validation skeleton accuracy.
// The model ends holding the parameters of its best validation epoch. An
// empty validation set falls back to the training examples. Throws Error
// (runtime) when the loss becomes non-finite.
TrainResult train(ParserModel& model, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> valid_set, const RelationCatalog& catalog,
                  const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Metrics

struct QuestionResult {
  std::string question;
  std::string category;
  std::vector<std::string> predicted;
  std::vector<std::string> gold;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool hit = false;
  bool flagged_empty = false;
  bool unanswered = false;
  std::string chosen_sparql;
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double hits_at_1 = 0.0;
  std::vector<QuestionResult> per_question;
};

// Set-valued scoring for SELECT answers; ASK/COUNT ("exact") answers score
// 1 on exact equality and 0 otherwise. Flagged-empty predictions score 0.
QuestionResult score_question(std::vector<std::string> predicted, std::vector<std::string> gold,
                              bool exact, bool flagged_empty);
// Macro averages over the per-question results.
Metrics aggregate(std::vector<QuestionResult> results);

struct Evaluation {
  Metrics overall;
  std::map<std::string, Metrics> by_category;
};

Evaluation evaluate(std::span<const DatasetRecord> records, const ParserModel& model,
                    const KgBundle& kb, const GrounderConfig& config = {});

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentReport {
  std::string name;
  std::vector<std::pair<std::string, std::string>> config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> dataset_hashes;  // name -> fnv1a64 hex
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  double wall_clock_seconds = 0.0;

  std::string config_hash() const;
  std::string to_json() const;
  std::string to_csv() const;
  // Writes <name>-<config hash>-seed<seed>.{json,csv}; returns the JSON path.
  std::string write(const std::string& dir) const;
};

std::string dataset_hash(std::span<const DatasetRecord> records);

struct TransferSetup {
  ModelConfig model;
  TrainConfig pretrain;
  TrainConfig finetune;
  std::vector<int> grid{0, 10, 50, 100, 500};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> vocab;  // shared vocabulary over both corpora
};

struct TransferPoint {
  int n = 0;
  std::uint64_t seed = 0;
  double pretrained_hits = 0.0;
  double scratch_hits = 0.0;
};

struct TransferResult {
  std::vector<TransferPoint> points;
  ExperimentReport report;
  double mean_pretrained(int n) const;
  double mean_scratch(int n) const;
};

// Fine-tunes a movie-A checkpoint and trains scratch models on N target
// examples (sampled per seed from target_pool), evaluating both on
// target_test. When pretrained is null the source model is trained first.
TransferResult run_transfer(const TransferSetup& setup, const ParserModel* pretrained,
                            std::span<const DatasetRecord> source_train,
                            std::span<const DatasetRecord> source_valid,
                            const KgBundle& source_kb,
                            std::span<const DatasetRecord> target_pool,
                            std::span<const DatasetRecord> target_test,
                            const KgBundle& target_kb,
                            const std::function<void(const std::string&)>& log = {});

struct UnseenSetup {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::string> excluded{"starred_actors>directed_by", "directed_by>starred_actors"};
  double dev_fraction = 0.1;
  std::vector<std::string> vocab;
};

struct UnseenResult {
  std::size_t train_size = 0;
  double seen_hits = 0.0;
  double unseen_hits = 0.0;
  Evaluation seen;
  Evaluation unseen;
  ExperimentReport report;
};

UnseenResult run_unseen(const UnseenSetup& setup, std::span<const DatasetRecord> records,
                        const KgBundle& kb,
                        const std::function<void(const std::string&)>& log = {});

// Vocabulary over the records' questions and every catalog's surfaces.
TokenVocab make_vocab(std::span<const DatasetRecord> records,
                      std::span<const RelationCatalog* const> catalogs);

}  // namespace kbqa

#endif  // KBQA_TRAIN_EVAL_HPP_
