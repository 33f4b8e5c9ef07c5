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

#ifndef KBQA_PARSER_MODEL_HPP_
#define KBQA_PARSER_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kbqa/autodiff.hpp"
#include "kbqa/query_ir.hpp"
#include "kbqa/text.hpp"

namespace kbqa {

struct ModelConfig {
  int d_model = 128;
  int n_layers_enc = 2;
  int n_layers_dec = 2;
  int n_heads = 4;
  int ff_dim = 256;
  double dropout = 0.1;
  int max_question_len = 48;  // words, before [CLS]/[SEP]
  int max_skeleton_len = 24;  // tokens including BOS and EOS
  int beam = 5;
  int shortlist = 3;       // surfaces kept per relation placeholder
  int candidate_cap = 25;  // sketch candidates returned by infer()
  double link_weight = 1.0;
  bool first_token_pooling = false;  // relation pooling: [CLS] state instead of mean
  std::uint64_t seed = 1;

  // Throws Error(kUsage) on non-positive sizes or d_model % n_heads != 0.
  void validate() const;
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  // Applies known keys; unknown keys throw Error(kUsage).
  void apply(const std::string& key, const std::string& value);
};

struct TrainingExample {
  std::vector<int> question;          // token ids with [CLS]/[SEP]
  std::vector<SkelTok> target;        // serialize(skeleton), BOS..EOS
  std::vector<std::size_t> gold_surfaces;  // per PROP index
  std::vector<std::string> entity_order;   // audit only
};

struct SurfaceScore {
  std::size_t surface = 0;
  double prob = 0.0;
};

// A skeleton plus one chosen surface per relation placeholder.
struct SketchCandidate {
  QuerySkeleton skeleton;
  std::vector<SkelTok> tokens;
  double sequence_logprob = 0.0;
  std::vector<std::vector<double>> link_logits;          // per PROP, full catalog
  std::vector<std::vector<SurfaceScore>> ranked_surfaces;  // per PROP, top shortlist
  std::vector<std::size_t> chosen;                       // per PROP surface index
  double joint_score = 0.0;  // exp(sequence_logprob) * prod chosen probabilities
};

struct LossMetrics {
  double loss = 0.0;
  double skeleton_ce = 0.0;   // mean over target tokens
  double linking_ce = 0.0;    // mean over placeholder positions
  double token_accuracy = 0.0;
  double linking_accuracy = 0.0;
  std::size_t tokens = 0;
  std::size_t links = 0;
  std::size_t sequences = 0;
  // Sequences whose every token and every placeholder link is argmax-correct.
  std::size_t exact_sequences = 0;
};

struct LossResult {
  Var loss;
  LossMetrics metrics;
};

// Encoded surface forms of one catalog, rows projected into decoder space.
struct RelationMatrix {
  Matrix rows;
  std::size_t unknown_tokens = 0;
};

// Per-step decoder output for one sequence.
struct DecodeStep {
  std::vector<double> probs;  // over the skeleton vocabulary
  std::vector<double> hidden; // final decoder state used for linking
};

class ParserModel {
 public:
  ParserModel(ModelConfig config, TokenVocab vocab);

  static ParserModel load(const std::string& path);
  void save(const std::string& path) const;

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  const TokenVocab& vocab() const { return vocab_; }
  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;

  // --- differentiable graph construction ---

  // One d_model row per position of ids. Throws TooLong.
  Var encode(Tape& tape, std::span<const int> ids, std::mt19937_64* rng = nullptr);
  // Teacher-forced decoder states for inputs target[0..n-2]; rows are the
  // final hidden states, one per prediction step.
  Var decode_states(Tape& tape, std::span<const SkelTok> target, Var memory,
                    std::mt19937_64* rng = nullptr);
  Var output_logits(Tape& tape, Var states);
  Var encode_relations(Tape& tape, const RelationCatalog& catalog,
                       std::mt19937_64* rng = nullptr);
  LossResult joint_loss(Tape& tape, std::span<const TrainingExample> batch, Var relations,
                        std::mt19937_64* rng = nullptr);

  // --- inference (no gradient recording) ---

  Matrix encode_question(std::span<const int> ids) const;
  RelationMatrix encode_relations(const RelationCatalog& catalog) const;
  // Distribution for the token following prefix (which starts with BOS).
  DecodeStep decode_step(std::span<const SkelTok> prefix, const Matrix& memory) const;
  // All teacher-forced distributions for target, as rows.
  Matrix teacher_forced_probs(std::span<const SkelTok> target, const Matrix& memory) const;

  // Beam search, parse filtering, partial relation linking, product scoring.
  // Throws NoValidSkeleton when every finished beam fails to parse.
  std::vector<SketchCandidate> infer(std::span<const int> question_ids,
                                     const RelationMatrix& relations) const;
  std::vector<SketchCandidate> infer(const std::string& question,
                                     const RelationMatrix& relations) const;

  // Beam search only: finished token sequences with log-probabilities and
  // the hidden state that produced each token.
  struct Beam {
    std::vector<SkelTok> tokens;
    double logprob = 0.0;
    std::vector<std::vector<double>> hidden;  // hidden[i] produced tokens[i + 1]
  };
  std::vector<Beam> beam_search(const Matrix& memory, int width) const;

 private:
  struct Attention {
    Parameter wq, wk, wv, wo;
  };
  struct FeedForward {
    Parameter w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Parameter ln1_g, ln1_b, ln2_g, ln2_b;
    Attention attn;
    FeedForward ff;
  };
  struct DecoderLayer {
    Parameter ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
    Attention self_attn, cross_attn;
    FeedForward ff;
  };
  class IncrementalDecoder;

  void init_parameters();
  Var use(Tape& tape, Parameter& p);
  Var attention(Tape& tape, Attention& a, Var query, Var memory, bool causal,
                std::mt19937_64* rng);
  Var feed_forward(Tape& tape, FeedForward& f, Var x, std::mt19937_64* rng);
  Var dropout(Var x, std::mt19937_64* rng) const;
  std::vector<int> surface_ids(const std::string& surface, std::size_t* unknown) const;

  ModelConfig config_;
  TokenVocab vocab_;

  Parameter word_emb_, enc_pos_, enc_ln_g_, enc_ln_b_;
  std::vector<EncoderLayer> enc_;
  Parameter rel_proj_;
  Parameter dec_emb_, dec_pos_, dec_ln_g_, dec_ln_b_;
  std::vector<DecoderLayer> dec_;
  Parameter out_w_, out_b_;
};

// Skeleton positions whose input state is used to link each PROP index:
// result[k] is the row of decode_states that predicts the first PROP_k.
std::vector<std::size_t> link_positions(std::span<const SkelTok> target);

}  // namespace kbqa

#endif  // KBQA_PARSER_MODEL_HPP_
