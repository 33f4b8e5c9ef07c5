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

#include "kbqa/train_eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kbqa/error.hpp"
#include "kbqa/optimizer.hpp"

namespace kbqa {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Shortest text that parses back to v.
std::string exact(double v) {
  char buf[64];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

void accumulate(LossMetrics& total, const LossMetrics& part) {
  const auto ct = total.token_accuracy * static_cast<double>(total.tokens) +
                  part.token_accuracy * static_cast<double>(part.tokens);
  const auto cl = total.linking_accuracy * static_cast<double>(total.links) +
                  part.linking_accuracy * static_cast<double>(part.links);
  const auto seq = static_cast<double>(total.sequences + part.sequences);
  total.loss = (total.loss * static_cast<double>(total.sequences) +
                part.loss * static_cast<double>(part.sequences)) / seq;
  total.skeleton_ce = (total.skeleton_ce * static_cast<double>(total.tokens) +
                       part.skeleton_ce * static_cast<double>(part.tokens)) /
                      static_cast<double>(total.tokens + part.tokens);
  if (total.links + part.links > 0) {
    total.linking_ce = (total.linking_ce * static_cast<double>(total.links) +
                        part.linking_ce * static_cast<double>(part.links)) /
                       static_cast<double>(total.links + part.links);
  }
  total.tokens += part.tokens;
  total.links += part.links;
  total.sequences += part.sequences;
  total.exact_sequences += part.exact_sequences;
  total.token_accuracy = ct / static_cast<double>(total.tokens);
  total.linking_accuracy = total.links ? cl / static_cast<double>(total.links) : 1.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Training

double skeleton_accuracy(const LossMetrics& m) {
  const double correct = m.token_accuracy * static_cast<double>(m.tokens) +
                         m.linking_accuracy * static_cast<double>(m.links);
  const auto total = static_cast<double>(m.tokens + m.links);
  return total > 0 ? correct / total : 0.0;
}

LossMetrics measure(const ParserModel& model, std::span<const TrainingExample> examples,
                    const RelationCatalog& catalog) {
  auto& m = const_cast<ParserModel&>(model);  // non-recording tapes only read parameters
  LossMetrics total;
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < examples.size(); i += kChunk) {
    Tape tape(false);
    const Var rel = m.encode_relations(tape, catalog);
    const auto part = m.joint_loss(tape, examples.subspan(i, std::min(kChunk, examples.size() - i)), rel);
    accumulate(total, part.metrics);
  }
  return total;
}

TrainResult train(ParserModel& model, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> valid_set, const RelationCatalog& catalog,
                  const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch) {
  if (train_set.empty()) throw Error(ErrorKind::kData, "no training examples");
  if (config.batch_size <= 0 || config.epochs <= 0) {
    throw Error(ErrorKind::kUsage, "epochs and batch size must be positive");
  }
  if (valid_set.empty()) valid_set = train_set;
  const auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  AdamState state;
  AdamConfig adam;
  adam.lr = config.lr;
  adam.clip_norm = config.clip_norm;
  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> best(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;

  TrainResult result;
  result.best_score = -1.0;
  int since_best = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::vector<TrainingExample> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        batch.push_back(train_set[order[i]]);
      }
      Tape tape;
      const Var rel = model.encode_relations(tape, catalog, &rng);
      const LossResult lr = model.joint_loss(tape, batch, rel, &rng);
      if (!std::isfinite(lr.metrics.loss)) {
        throw Error(ErrorKind::kRuntime, "training diverged: loss " + fmt(lr.metrics.loss) +
                                             " at epoch " + std::to_string(epoch) + ", batch " +
                                             std::to_string(batches + 1));
      }
      if (epoch == 1 && batches == 0) result.initial_loss = lr.metrics.loss;
      tape.backward(lr.loss);
      adam_step(params, state, adam);
      for (auto* p : params) p->zero_grad();
      loss_sum += lr.metrics.loss;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches);
    log.valid = measure(model, valid_set, catalog);
    log.valid_score = skeleton_accuracy(log.valid);
    log.seconds = seconds_since(t0);
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.valid_score > result.best_score) {
      result.best_score = log.valid_score;
      result.best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(best[i]);
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

QuestionResult score_question(std::vector<std::string> predicted, std::vector<std::string> gold,
                              bool exact, bool flagged_empty) {
  std::sort(predicted.begin(), predicted.end());
  predicted.erase(std::unique(predicted.begin(), predicted.end()), predicted.end());
  std::sort(gold.begin(), gold.end());
  gold.erase(std::unique(gold.begin(), gold.end()), gold.end());
  QuestionResult q;
  q.flagged_empty = flagged_empty;
  if (exact) {
    const bool same = !flagged_empty && predicted == gold;
    q.precision = q.recall = q.f1 = same ? 1.0 : 0.0;
    q.hit = same;
  } else if (!flagged_empty && !predicted.empty() && !gold.empty()) {
    std::vector<std::string> inter;
    std::set_intersection(predicted.begin(), predicted.end(), gold.begin(), gold.end(),
                          std::back_inserter(inter));
    const auto k = static_cast<double>(inter.size());
    q.precision = k / static_cast<double>(predicted.size());
    q.recall = k / static_cast<double>(gold.size());
    q.f1 = q.precision + q.recall > 0 ? 2 * q.precision * q.recall / (q.precision + q.recall) : 0.0;
    q.hit = !inter.empty();
  }
  q.predicted = std::move(predicted);
  q.gold = std::move(gold);
  return q;
}

Metrics aggregate(std::vector<QuestionResult> results) {
  Metrics m;
  if (!results.empty()) {
    for (const auto& r : results) {
      m.precision += r.precision;
      m.recall += r.recall;
      m.f1 += r.f1;
      m.hits_at_1 += r.hit ? 1.0 : 0.0;
    }
    const auto n = static_cast<double>(results.size());
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    m.hits_at_1 /= n;
  }
  m.per_question = std::move(results);
  return m;
}

Evaluation evaluate(std::span<const DatasetRecord> records, const ParserModel& model,
                    const KgBundle& kb, const GrounderConfig& config) {
  const RelationMatrix rel = model.encode_relations(kb.catalog);
  std::vector<QuestionResult> all;
  std::map<std::string, std::vector<QuestionResult>> groups;
  for (const auto& rec : records) {
    const GroundingContext ctx = make_context(kb.kg, kb.catalog, rec.question);
    const GroundingOutcome out = answer(rec.question, model, rel, ctx, config);
    const std::string category = record_category(rec);
    std::vector<std::string> predicted;
    if (!out.unanswered) predicted = answer_strings(out.answer, kb.kg);
    QuestionResult q = score_question(std::move(predicted), rec.answers,
                                      category == "ask" || category == "count", out.flagged_empty);
    q.question = rec.question;
    q.category = category;
    q.unanswered = out.unanswered;
    if (const auto* chosen = out.chosen_query()) q.chosen_sparql = print_sparql(*chosen, kb.kg);
    groups[category].push_back(q);
    all.push_back(std::move(q));
  }
  Evaluation e;
  e.overall = aggregate(std::move(all));
  for (auto& [cat, qs] : groups) e.by_category[cat] = aggregate(std::move(qs));
  return e;
}

// ---------------------------------------------------------------------------
// Reports

std::string ExperimentReport::config_hash() const {
  std::string text;
  for (const auto& [k, v] : config) text += k + "=" + v + "\n";
  return hex64(fnv1a64(text)).substr(0, 12);
}

std::string ExperimentReport::to_json() const {
  nlohmann::ordered_json j;
  j["experiment"] = name;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  j["config_hash"] = config_hash();
  j["seed"] = seed;
  j["datasets"] = dataset_hashes;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json r;
    for (std::size_t c = 0; c < columns.size() && c < row.size(); ++c) r[columns[c]] = row[c];
    table.push_back(r);
  }
  j["rows"] = table;
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j.dump(2) + "\n";
}

std::string ExperimentReport::to_csv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
  return out;
}

std::string ExperimentReport::write(const std::string& dir) const {
  const auto base = std::filesystem::path(dir) /
                    (name + "-" + config_hash() + "-seed" + std::to_string(seed));
  write_file_atomic(base.string() + ".json", to_json());
  write_file_atomic(base.string() + ".csv", to_csv());
  return base.string() + ".json";
}

std::string dataset_hash(std::span<const DatasetRecord> records) {
  std::string text;
  for (const auto& r : records) {
    text += record_to_json(r);
    text += '\n';
  }
  return hex64(fnv1a64(text));
}

TokenVocab make_vocab(std::span<const DatasetRecord> records,
                      std::span<const RelationCatalog* const> catalogs) {
  const auto corpus = vocabulary_corpus(records, catalogs);
  return TokenVocab::build(corpus);
}

// ---------------------------------------------------------------------------
// Experiments

double TransferResult::mean_pretrained(int n) const {
  double s = 0.0;
  int k = 0;
  for (const auto& p : points) {
    if (p.n == n) {
      s += p.pretrained_hits;
      ++k;
    }
  }
  return k ? s / k : 0.0;
}

double TransferResult::mean_scratch(int n) const {
  double s = 0.0;
  int k = 0;
  for (const auto& p : points) {
    if (p.n == n) {
      s += p.scratch_hits;
      ++k;
    }
  }
  return k ? s / k : 0.0;
}

namespace {

std::vector<TrainingExample> examples_or_throw(std::span<const DatasetRecord> records,
                                               const RelationCatalog& catalog,
                                               const TokenVocab& vocab, const ModelConfig& cfg) {
  auto pre = preprocess(records, catalog, vocab, cfg);
  if (pre.rejected_total() > 0) {
    std::string why;
    for (const auto& [reason, n] : pre.rejected) why += " " + reason + "=" + std::to_string(n);
    throw Error(ErrorKind::kData, "preprocessing rejected records:" + why);
  }
  return std::move(pre.examples);
}

void say(const std::function<void(const std::string&)>& log, const std::string& msg) {
  if (log) log(msg);
}

std::vector<std::pair<std::string, std::string>> train_pairs(const std::string& prefix,
                                                             const TrainConfig& t) {
  return {{prefix + "epochs", std::to_string(t.epochs)},
          {prefix + "batch_size", std::to_string(t.batch_size)},
          {prefix + "lr", exact(t.lr)},
          {prefix + "clip_norm", exact(t.clip_norm)},
          {prefix + "patience", std::to_string(t.patience)},
          {prefix + "seed", std::to_string(t.seed)}};
}

}  // namespace

TransferResult run_transfer(const TransferSetup& setup, const ParserModel* pretrained,
                            std::span<const DatasetRecord> source_train,
                            std::span<const DatasetRecord> source_valid,
                            const KgBundle& source_kb,
                            std::span<const DatasetRecord> target_pool,
                            std::span<const DatasetRecord> target_test,
                            const KgBundle& target_kb,
                            const std::function<void(const std::string&)>& log) {
  const auto t0 = Clock::now();
  std::optional<ParserModel> trained_source;
  if (!pretrained) {
    TokenVocab vocab = TokenVocab::from_tokens(setup.vocab);
    trained_source.emplace(setup.model, vocab);
    const auto tr = examples_or_throw(source_train, source_kb.catalog, vocab, setup.model);
    const auto va = examples_or_throw(source_valid, source_kb.catalog, vocab, setup.model);
    say(log, "pretraining on " + std::to_string(tr.size()) + " source examples");
    train(*trained_source, tr, va, source_kb.catalog, setup.pretrain);
    pretrained = &*trained_source;
  }
  const TokenVocab& vocab = pretrained->vocab();
  ModelConfig scratch_cfg = pretrained->config();

  TransferResult result;
  std::optional<double> zero_shot;
  for (std::uint64_t seed : setup.seeds) {
    std::vector<std::size_t> order(target_pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (int n : setup.grid) {
      if (static_cast<std::size_t>(n) > target_pool.size()) {
        throw Error(ErrorKind::kData, "transfer grid point " + std::to_string(n) +
                                          " exceeds the target pool of " +
                                          std::to_string(target_pool.size()));
      }
      std::vector<DatasetRecord> subset;
      for (int i = 0; i < n; ++i) subset.push_back(target_pool[order[static_cast<std::size_t>(i)]]);
      const auto ex = examples_or_throw(subset, target_kb.catalog, vocab, scratch_cfg);
      TrainConfig tc = setup.finetune;
      tc.seed = seed;

      TransferPoint p;
      p.n = n;
      p.seed = seed;
      if (n == 0 && zero_shot) {
        p.pretrained_hits = *zero_shot;
      } else {
        ParserModel ft = *pretrained;
        if (n > 0) train(ft, ex, {}, target_kb.catalog, tc);
        p.pretrained_hits = evaluate(target_test, ft, target_kb).overall.hits_at_1;
        if (n == 0) zero_shot = p.pretrained_hits;
      }
      ModelConfig c = scratch_cfg;
      c.seed = seed;
      ParserModel scratch(c, vocab);
      if (n > 0) train(scratch, ex, {}, target_kb.catalog, tc);
      p.scratch_hits = evaluate(target_test, scratch, target_kb).overall.hits_at_1;
      say(log, "transfer seed=" + std::to_string(seed) + " n=" + std::to_string(n) +
                   " pretrained=" + fmt(p.pretrained_hits) + " scratch=" + fmt(p.scratch_hits));
      result.points.push_back(p);
    }
  }

  auto& rep = result.report;
  rep.name = "transfer";
  rep.config = pretrained->config().to_pairs();
  for (auto& kv : train_pairs("finetune.", setup.finetune)) rep.config.push_back(kv);
  std::string grid, seeds;
  for (int n : setup.grid) grid += (grid.empty() ? "" : " ") + std::to_string(n);
  for (auto s : setup.seeds) seeds += (seeds.empty() ? "" : " ") + std::to_string(s);
  rep.config.emplace_back("grid", grid);
  rep.config.emplace_back("seeds", seeds);
  rep.seed = setup.seeds.empty() ? 0 : setup.seeds.front();
  rep.dataset_hashes = {{"source_train", dataset_hash(source_train)},
                        {"target_pool", dataset_hash(target_pool)},
                        {"target_test", dataset_hash(target_test)}};
  rep.columns = {"n", "seed", "pretrained_hits_at_1", "scratch_hits_at_1"};
  for (const auto& p : result.points) {
    rep.rows.push_back({std::to_string(p.n), std::to_string(p.seed), fmt(p.pretrained_hits),
                        fmt(p.scratch_hits)});
  }
  for (int n : setup.grid) {
    rep.rows.push_back({std::to_string(n), "mean", fmt(result.mean_pretrained(n)),
                        fmt(result.mean_scratch(n))});
  }
  rep.wall_clock_seconds = seconds_since(t0);
  return result;
}

UnseenResult run_unseen(const UnseenSetup& setup, std::span<const DatasetRecord> records,
                        const KgBundle& kb, const std::function<void(const std::string&)>& log) {
  const auto t0 = Clock::now();
  UnseenSplit split = make_unseen_split(records, setup.excluded, setup.dev_fraction, setup.train.seed);
  // Early stopping uses a slice of the reduced training set, never seen-dev.
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(setup.train.seed + 1);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_valid = static_cast<std::size_t>(static_cast<double>(order.size()) * setup.dev_fraction);
  std::vector<DatasetRecord> tr, va;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_valid ? va : tr).push_back(split.train[order[i]]);
  }

  const RelationCatalog* cats[] = {&kb.catalog};
  TokenVocab vocab = setup.vocab.empty() ? make_vocab(records, cats)
                                         : TokenVocab::from_tokens(setup.vocab);
  ParserModel model(setup.model, vocab);
  const auto tr_ex = examples_or_throw(tr, kb.catalog, vocab, setup.model);
  const auto va_ex = examples_or_throw(va, kb.catalog, vocab, setup.model);
  say(log, "unseen: training on " + std::to_string(tr_ex.size()) + " examples");
  train(model, tr_ex, va_ex, kb.catalog, setup.train, [&](const EpochLog& e) {
    say(log, "epoch " + std::to_string(e.epoch) + " loss=" + fmt(e.train_loss) +
                 " valid=" + fmt(e.valid_score));
  });

  UnseenResult out;
  out.train_size = tr_ex.size();
  out.seen = evaluate(split.seen_dev, model, kb);
  out.unseen = evaluate(split.unseen_dev, model, kb);
  out.seen_hits = out.seen.overall.hits_at_1;
  out.unseen_hits = out.unseen.overall.hits_at_1;

  auto& rep = out.report;
  rep.name = "unseen";
  rep.config = setup.model.to_pairs();
  for (auto& kv : train_pairs("train.", setup.train)) rep.config.push_back(kv);
  std::string ex;
  for (const auto& s : setup.excluded) ex += (ex.empty() ? "" : ",") + s;
  rep.config.emplace_back("exclude_paths", ex);
  rep.seed = setup.train.seed;
  rep.dataset_hashes = {{"records", dataset_hash(records)},
                        {"train", dataset_hash(split.train)},
                        {"seen_dev", dataset_hash(split.seen_dev)},
                        {"unseen_dev", dataset_hash(split.unseen_dev)}};
  rep.columns = {"split", "questions", "precision", "recall", "f1", "hits_at_1"};
  auto row = [&](const std::string& name, const Evaluation& e) {
    rep.rows.push_back({name, std::to_string(e.overall.per_question.size()),
                        fmt(e.overall.precision), fmt(e.overall.recall), fmt(e.overall.f1),
                        fmt(e.overall.hits_at_1)});
  };
  row("seen-dev", out.seen);
  row("unseen-dev", out.unseen);
  rep.wall_clock_seconds = seconds_since(t0);
  return out;
}

}  // namespace kbqa
