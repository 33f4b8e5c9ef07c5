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
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include "kbqa/checkpoint.hpp"
#include "kbqa/error.hpp"

namespace kbqa {
namespace {

constexpr double kLnEps = 1e-10;

std::vector<int> to_ids(std::span<const SkelTok> toks) {
  std::vector<int> ids;
  ids.reserve(toks.size());
  for (auto t : toks) ids.push_back(static_cast<int>(t));
  return ids;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Matrix row_matrix(std::span<const double> v) {
  return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kUsage, "model option " + key + " expects an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kUsage, "model option " + key + " expects a number, got '" + value + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  for (auto [name, v] : {std::pair{"d_model", d_model}, {"n_layers_enc", n_layers_enc},
                         {"n_layers_dec", n_layers_dec}, {"n_heads", n_heads},
                         {"ff_dim", ff_dim}, {"max_question_len", max_question_len},
                         {"max_skeleton_len", max_skeleton_len}, {"beam", beam},
                         {"shortlist", shortlist}, {"candidate_cap", candidate_cap}}) {
    if (v <= 0) throw Error(ErrorKind::kUsage, std::string(name) + " must be positive");
  }
  if (d_model % n_heads != 0) throw Error(ErrorKind::kUsage, "d_model must be divisible by n_heads");
  if (dropout < 0.0 || dropout >= 1.0) throw Error(ErrorKind::kUsage, "dropout must be in [0, 1)");
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_pairs() const {
  auto num = [](double v) {
    char buf[64];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  return {{"d_model", std::to_string(d_model)},
          {"n_layers_enc", std::to_string(n_layers_enc)},
          {"n_layers_dec", std::to_string(n_layers_dec)},
          {"n_heads", std::to_string(n_heads)},
          {"ff_dim", std::to_string(ff_dim)},
          {"dropout", num(dropout)},
          {"max_question_len", std::to_string(max_question_len)},
          {"max_skeleton_len", std::to_string(max_skeleton_len)},
          {"beam", std::to_string(beam)},
          {"shortlist", std::to_string(shortlist)},
          {"candidate_cap", std::to_string(candidate_cap)},
          {"link_weight", num(link_weight)},
          {"relation_pooling", first_token_pooling ? "first" : "mean"},
          {"seed", std::to_string(seed)}};
}

void ModelConfig::apply(const std::string& key, const std::string& value) {
  if (key == "d_model") d_model = parse_int(key, value);
  else if (key == "n_layers_enc") n_layers_enc = parse_int(key, value);
  else if (key == "n_layers_dec") n_layers_dec = parse_int(key, value);
  else if (key == "n_heads") n_heads = parse_int(key, value);
  else if (key == "ff_dim") ff_dim = parse_int(key, value);
  else if (key == "dropout") dropout = parse_double(key, value);
  else if (key == "max_question_len") max_question_len = parse_int(key, value);
  else if (key == "max_skeleton_len") max_skeleton_len = parse_int(key, value);
  else if (key == "beam") beam = parse_int(key, value);
  else if (key == "shortlist") shortlist = parse_int(key, value);
  else if (key == "candidate_cap") candidate_cap = parse_int(key, value);
  else if (key == "link_weight") link_weight = parse_double(key, value);
  else if (key == "relation_pooling") {
    if (value != "mean" && value != "first") {
      throw Error(ErrorKind::kUsage, "relation_pooling must be 'mean' or 'first'");
    }
    first_token_pooling = value == "first";
  } else if (key == "seed") {
    seed = std::stoull(value);
  } else {
    throw Error(ErrorKind::kUsage, "unknown model option '" + key + "'");
  }
}

// ---------------------------------------------------------------------------
// Parameters

ParserModel::ParserModel(ModelConfig config, TokenVocab vocab)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  init_parameters();
}

void ParserModel::init_parameters() {
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto ff = static_cast<std::size_t>(config_.ff_dim);
  std::mt19937_64 rng(config_.seed);
  const double a = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> uni(-a, a);
  auto random = [&](std::string name, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (auto& v : m.data) v = uni(rng);
    return Parameter(std::move(name), std::move(m));
  };
  auto fill = [](std::string name, std::size_t r, std::size_t c, double v) {
    return Parameter(std::move(name), Matrix(r, c, v));
  };
  auto attention = [&](const std::string& p) {
    return Attention{random(p + ".wq", d, d), random(p + ".wk", d, d), random(p + ".wv", d, d),
                     random(p + ".wo", d, d)};
  };
  auto feed_forward = [&](const std::string& p) {
    return FeedForward{random(p + ".w1", d, ff), fill(p + ".b1", 1, ff, 0.0),
                       random(p + ".w2", ff, d), fill(p + ".b2", 1, d, 0.0)};
  };

  word_emb_ = random("enc.word_emb", vocab_.size(), d);
  enc_pos_ = random("enc.pos_emb", static_cast<std::size_t>(config_.max_question_len) + 2, d);
  enc_.clear();
  for (int l = 0; l < config_.n_layers_enc; ++l) {
    const std::string p = "enc." + std::to_string(l);
    enc_.push_back({fill(p + ".ln1.g", 1, d, 1.0), fill(p + ".ln1.b", 1, d, 0.0),
                    fill(p + ".ln2.g", 1, d, 1.0), fill(p + ".ln2.b", 1, d, 0.0),
                    attention(p + ".attn"), feed_forward(p + ".ff")});
  }
  enc_ln_g_ = fill("enc.ln.g", 1, d, 1.0);
  enc_ln_b_ = fill("enc.ln.b", 1, d, 0.0);
  rel_proj_ = random("rel.proj", d, d);

  dec_emb_ = random("dec.tok_emb", kSkeletonVocabSize, d);
  dec_pos_ = random("dec.pos_emb", static_cast<std::size_t>(config_.max_skeleton_len), d);
  dec_.clear();
  for (int l = 0; l < config_.n_layers_dec; ++l) {
    const std::string p = "dec." + std::to_string(l);
    dec_.push_back({fill(p + ".ln1.g", 1, d, 1.0), fill(p + ".ln1.b", 1, d, 0.0),
                    fill(p + ".ln2.g", 1, d, 1.0), fill(p + ".ln2.b", 1, d, 0.0),
                    fill(p + ".ln3.g", 1, d, 1.0), fill(p + ".ln3.b", 1, d, 0.0),
                    attention(p + ".self"), attention(p + ".cross"), feed_forward(p + ".ff")});
  }
  dec_ln_g_ = fill("dec.ln.g", 1, d, 1.0);
  dec_ln_b_ = fill("dec.ln.b", 1, d, 0.0);
  out_w_ = random("dec.out.w", d, kSkeletonVocabSize);
  out_b_ = fill("dec.out.b", 1, kSkeletonVocabSize, 0.0);
}

std::vector<Parameter*> ParserModel::parameters() {
  std::vector<Parameter*> ps{&word_emb_, &enc_pos_};
  auto attn = [&](Attention& a) { ps.insert(ps.end(), {&a.wq, &a.wk, &a.wv, &a.wo}); };
  auto ff = [&](FeedForward& f) { ps.insert(ps.end(), {&f.w1, &f.b1, &f.w2, &f.b2}); };
  for (auto& l : enc_) {
    ps.insert(ps.end(), {&l.ln1_g, &l.ln1_b, &l.ln2_g, &l.ln2_b});
    attn(l.attn);
    ff(l.ff);
  }
  ps.insert(ps.end(), {&enc_ln_g_, &enc_ln_b_, &rel_proj_, &dec_emb_, &dec_pos_});
  for (auto& l : dec_) {
    ps.insert(ps.end(), {&l.ln1_g, &l.ln1_b, &l.ln2_g, &l.ln2_b, &l.ln3_g, &l.ln3_b});
    attn(l.self_attn);
    attn(l.cross_attn);
    ff(l.ff);
  }
  ps.insert(ps.end(), {&dec_ln_g_, &dec_ln_b_, &out_w_, &out_b_});
  return ps;
}

std::size_t ParserModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : const_cast<ParserModel*>(this)->parameters()) n += p->value.size();
  return n;
}

void ParserModel::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.config = config_.to_pairs();
  ckpt.vocab = vocab_.tokens();
  for (const auto* p : const_cast<ParserModel*>(this)->parameters()) {
    ckpt.params.emplace_back(p->name, p->value);
  }
  write_checkpoint(path, ckpt);
}

ParserModel ParserModel::load(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  ModelConfig config;
  for (const auto& [k, v] : ckpt.config) config.apply(k, v);
  ParserModel model(config, TokenVocab::from_tokens(ckpt.vocab));
  auto params = model.parameters();
  if (params.size() != ckpt.params.size()) {
    throw DataError("checkpoint " + path + " holds " + std::to_string(ckpt.params.size()) +
                    " parameters, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, value] = ckpt.params[i];
    if (name != params[i]->name || !value.same_shape(params[i]->value)) {
      throw DataError("checkpoint parameter " + name + " (" + value.shape_string() +
                      ") does not match " + params[i]->name + " (" +
                      params[i]->value.shape_string() + ")");
    }
    params[i]->value = std::move(value);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Differentiable forward

Var ParserModel::use(Tape& tape, Parameter& p) { return tape.param(p); }

Var ParserModel::dropout(Var x, std::mt19937_64* rng) const {
  if (!rng || config_.dropout <= 0.0) return x;
  return ops::dropout(x, config_.dropout, *rng);
}

Var ParserModel::attention(Tape& tape, Attention& a, Var query, Var memory, bool causal,
                           std::mt19937_64* rng) {
  const Var q = ops::matmul(query, use(tape, a.wq));
  const Var k = ops::matmul(memory, use(tape, a.wk));
  const Var v = ops::matmul(memory, use(tape, a.wv));
  const std::size_t dh = static_cast<std::size_t>(config_.d_model / config_.n_heads);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  for (std::size_t h = 0; h < static_cast<std::size_t>(config_.n_heads); ++h) {
    const Var qh = ops::slice_cols(q, h * dh, (h + 1) * dh);
    const Var kh = ops::slice_cols(k, h * dh, (h + 1) * dh);
    const Var vh = ops::slice_cols(v, h * dh, (h + 1) * dh);
    Var scores = ops::scale(ops::matmul_nt(qh, kh), inv);
    if (causal) scores = ops::causal_mask(scores);
    heads.push_back(ops::matmul(ops::softmax(scores), vh));
  }
  return dropout(ops::matmul(ops::concat_cols(heads), use(tape, a.wo)), rng);
}

Var ParserModel::feed_forward(Tape& tape, FeedForward& f, Var x, std::mt19937_64* rng) {
  const Var h = ops::gelu(ops::add_row(ops::matmul(x, use(tape, f.w1)), use(tape, f.b1)));
  return dropout(ops::add_row(ops::matmul(h, use(tape, f.w2)), use(tape, f.b2)), rng);
}

Var ParserModel::encode(Tape& tape, std::span<const int> ids, std::mt19937_64* rng) {
  if (ids.size() > static_cast<std::size_t>(config_.max_question_len) + 2) {
    throw TooLong(ids.size() - 2, static_cast<std::size_t>(config_.max_question_len));
  }
  std::vector<int> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var x = ops::add(ops::embedding(use(tape, word_emb_), ids),
                   ops::embedding(use(tape, enc_pos_), positions));
  x = dropout(x, rng);
  for (auto& l : enc_) {
    const Var h = ops::layer_norm(x, use(tape, l.ln1_g), use(tape, l.ln1_b), kLnEps);
    x = ops::add(x, attention(tape, l.attn, h, h, false, rng));
    const Var h2 = ops::layer_norm(x, use(tape, l.ln2_g), use(tape, l.ln2_b), kLnEps);
    x = ops::add(x, feed_forward(tape, l.ff, h2, rng));
  }
  return ops::layer_norm(x, use(tape, enc_ln_g_), use(tape, enc_ln_b_), kLnEps);
}

Var ParserModel::decode_states(Tape& tape, std::span<const SkelTok> target, Var memory,
                               std::mt19937_64* rng) {
  if (target.size() < 2) throw ShapeMismatch("decoder target needs at least BOS and one token");
  if (target.size() > static_cast<std::size_t>(config_.max_skeleton_len)) {
    throw TooLong(target.size(), static_cast<std::size_t>(config_.max_skeleton_len));
  }
  const auto inputs = to_ids(target.first(target.size() - 1));
  std::vector<int> positions(inputs.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var x = ops::add(ops::embedding(use(tape, dec_emb_), inputs),
                   ops::embedding(use(tape, dec_pos_), positions));
  x = dropout(x, rng);
  for (auto& l : dec_) {
    const Var h = ops::layer_norm(x, use(tape, l.ln1_g), use(tape, l.ln1_b), kLnEps);
    x = ops::add(x, attention(tape, l.self_attn, h, h, true, rng));
    const Var h2 = ops::layer_norm(x, use(tape, l.ln2_g), use(tape, l.ln2_b), kLnEps);
    x = ops::add(x, attention(tape, l.cross_attn, h2, memory, false, rng));
    const Var h3 = ops::layer_norm(x, use(tape, l.ln3_g), use(tape, l.ln3_b), kLnEps);
    x = ops::add(x, feed_forward(tape, l.ff, h3, rng));
  }
  return ops::layer_norm(x, use(tape, dec_ln_g_), use(tape, dec_ln_b_), kLnEps);
}

Var ParserModel::output_logits(Tape& tape, Var states) {
  return ops::add_row(ops::matmul(states, use(tape, out_w_)), use(tape, out_b_));
}

std::vector<int> ParserModel::surface_ids(const std::string& surface, std::size_t* unknown) const {
  auto ids = vocab_.encode(tokenize(surface));
  if (unknown) {
    *unknown += static_cast<std::size_t>(std::count(ids.begin(), ids.end(), TokenVocab::kUnk));
  }
  return ids;
}

Var ParserModel::encode_relations(Tape& tape, const RelationCatalog& catalog,
                                  std::mt19937_64* rng) {
  std::vector<Var> pooled;
  pooled.reserve(catalog.surface_count());
  for (const auto& surface : catalog.surfaces()) {
    const auto ids = surface_ids(surface, nullptr);
    const Var states = encode(tape, ids, rng);
    if (config_.first_token_pooling) {
      const std::size_t first = 0;
      pooled.push_back(ops::select_rows(states, std::span(&first, 1)));
    } else {
      std::vector<std::size_t> inner(ids.size() - 2);
      std::iota(inner.begin(), inner.end(), 1);
      pooled.push_back(ops::mean_rows(ops::select_rows(states, inner)));
    }
  }
  return ops::matmul(ops::concat_rows(pooled), use(tape, rel_proj_));
}

std::vector<std::size_t> link_positions(std::span<const SkelTok> target) {
  std::vector<std::size_t> rows;
  for (int k = 0; k < kMaxProps; ++k) {
    auto it = std::find(target.begin(), target.end(), prop_token(k));
    if (it == target.end()) break;
    rows.push_back(static_cast<std::size_t>(it - target.begin()) - 1);
  }
  return rows;
}

LossResult ParserModel::joint_loss(Tape& tape, std::span<const TrainingExample> batch,
                                   Var relations, std::mt19937_64* rng) {
  if (batch.empty()) throw Error(ErrorKind::kRuntime, "joint_loss on an empty batch");
  LossMetrics m;
  std::vector<Var> token_terms, link_terms;
  std::size_t correct_tokens = 0, correct_links = 0;
  for (const auto& ex : batch) {
    const Var memory = encode(tape, ex.question, rng);
    const Var states = decode_states(tape, ex.target, memory, rng);
    const Var logits = output_logits(tape, states);
    const auto targets = to_ids(std::span(ex.target).subspan(1));
    token_terms.push_back(ops::cross_entropy_sum(logits, targets));
    bool exact = true;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const bool ok = static_cast<int>(argmax(logits.value().row(i))) == targets[i];
      correct_tokens += ok;
      exact = exact && ok;
    }
    m.tokens += targets.size();

    const auto rows = link_positions(ex.target);
    if (rows.size() != ex.gold_surfaces.size()) {
      throw Error(ErrorKind::kData, "example has " + std::to_string(rows.size()) +
                                        " placeholders but " +
                                        std::to_string(ex.gold_surfaces.size()) + " gold surfaces");
    }
    if (!rows.empty()) {
      const Var scores = ops::matmul_nt(ops::select_rows(states, rows), relations);
      std::vector<int> gold(ex.gold_surfaces.begin(), ex.gold_surfaces.end());
      link_terms.push_back(ops::cross_entropy_sum(scores, gold));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool ok = static_cast<int>(argmax(scores.value().row(i))) == gold[i];
        correct_links += ok;
        exact = exact && ok;
      }
      m.links += rows.size();
    }
    ++m.sequences;
    m.exact_sequences += exact;
  }
  const Var token_ce = ops::scale(ops::sum(ops::concat_rows(token_terms)),
                                  1.0 / static_cast<double>(m.tokens));
  Var loss = token_ce;
  m.skeleton_ce = token_ce.scalar();
  if (!link_terms.empty()) {
    const Var link_ce = ops::scale(ops::sum(ops::concat_rows(link_terms)),
                                   1.0 / static_cast<double>(m.links));
    m.linking_ce = link_ce.scalar();
    loss = ops::add(loss, ops::scale(link_ce, config_.link_weight));
  }
  m.loss = loss.scalar();
  m.token_accuracy = static_cast<double>(correct_tokens) / static_cast<double>(m.tokens);
  m.linking_accuracy =
      m.links ? static_cast<double>(correct_links) / static_cast<double>(m.links) : 1.0;
  return {loss, m};
}

// ---------------------------------------------------------------------------
// Inference

Matrix ParserModel::encode_question(std::span<const int> ids) const {
  Tape tape(false);
  auto* self = const_cast<ParserModel*>(this);  // non-recording tape only reads parameters
  return self->encode(tape, ids).value();
}

RelationMatrix ParserModel::encode_relations(const RelationCatalog& catalog) const {
  Tape tape(false);
  auto* self = const_cast<ParserModel*>(this);
  RelationMatrix out;
  for (const auto& s : catalog.surfaces()) surface_ids(s, &out.unknown_tokens);
  out.rows = self->encode_relations(tape, catalog).value();
  return out;
}

// Kernel-level decoder that appends one position at a time and caches the
// self-attention keys/values of earlier positions.
class ParserModel::IncrementalDecoder {
 public:
  struct State {
    std::vector<Matrix> keys, values;  // per layer, one row per position
  };

  IncrementalDecoder(const ParserModel& m, const Matrix& memory) : m_(m) {
    for (const auto& l : m.dec_) {
      Matrix k, v;
      kernels::matmul(memory, l.cross_attn.wk.value, k);
      kernels::matmul(memory, l.cross_attn.wv.value, v);
      cross_k_.push_back(std::move(k));
      cross_v_.push_back(std::move(v));
    }
  }

  State initial() const {
    State s;
    const auto d = static_cast<std::size_t>(m_.config_.d_model);
    for (std::size_t l = 0; l < m_.dec_.size(); ++l) {
      s.keys.emplace_back(0, d);
      s.values.emplace_back(0, d);
    }
    return s;
  }

  DecodeStep step(State& s, SkelTok tok, std::size_t pos) const {
    const auto d = static_cast<std::size_t>(m_.config_.d_model);
    if (pos >= m_.dec_pos_.value.rows) {
      throw TooLong(pos + 1, m_.dec_pos_.value.rows);
    }
    Matrix x(1, d);
    const auto t = static_cast<std::size_t>(tok);
    for (std::size_t j = 0; j < d; ++j) {
      x.data[j] = m_.dec_emb_.value(t, j) + m_.dec_pos_.value(pos, j);
    }
    Matrix h, q, o;
    for (std::size_t l = 0; l < m_.dec_.size(); ++l) {
      const auto& L = m_.dec_[l];
      kernels::layer_norm(x, L.ln1_g.value, L.ln1_b.value, kLnEps, h);
      kernels::matmul(h, L.self_attn.wq.value, q);
      Matrix k, v;
      kernels::matmul(h, L.self_attn.wk.value, k);
      kernels::matmul(h, L.self_attn.wv.value, v);
      append_row(s.keys[l], k);
      append_row(s.values[l], v);
      attend(q, s.keys[l], s.values[l], L.self_attn.wo.value, o);
      kernels::add_inplace(x, o);

      kernels::layer_norm(x, L.ln2_g.value, L.ln2_b.value, kLnEps, h);
      kernels::matmul(h, L.cross_attn.wq.value, q);
      attend(q, cross_k_[l], cross_v_[l], L.cross_attn.wo.value, o);
      kernels::add_inplace(x, o);

      kernels::layer_norm(x, L.ln3_g.value, L.ln3_b.value, kLnEps, h);
      Matrix f1, f2;
      kernels::matmul(h, L.ff.w1.value, f1);
      kernels::add_row_inplace(f1, L.ff.b1.value);
      kernels::gelu_inplace(f1);
      kernels::matmul(f1, L.ff.w2.value, f2);
      kernels::add_row_inplace(f2, L.ff.b2.value);
      kernels::add_inplace(x, f2);
    }
    Matrix final_h, logits;
    kernels::layer_norm(x, m_.dec_ln_g_.value, m_.dec_ln_b_.value, kLnEps, final_h);
    kernels::matmul(final_h, m_.out_w_.value, logits);
    kernels::add_row_inplace(logits, m_.out_b_.value);
    kernels::softmax_rows(logits);
    return {std::move(logits.data), std::move(final_h.data)};
  }

 private:
  static void append_row(Matrix& m, const Matrix& row) {
    m.data.insert(m.data.end(), row.data.begin(), row.data.end());
    ++m.rows;
  }

  void attend(const Matrix& q, const Matrix& keys, const Matrix& values, const Matrix& wo,
              Matrix& out) const {
    const auto d = static_cast<std::size_t>(m_.config_.d_model);
    const auto heads = static_cast<std::size_t>(m_.config_.n_heads);
    const std::size_t dh = d / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix concat(1, d);
    Matrix scores(1, keys.rows);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      for (std::size_t j = 0; j < keys.rows; ++j) {
        scores.data[j] = kernels::dot(&q.data[hd * dh], &keys.data[j * d + hd * dh], dh) * inv;
      }
      kernels::softmax_rows(scores);
      for (std::size_t j = 0; j < keys.rows; ++j) {
        const double p = scores.data[j];
        if (p == 0.0) continue;
        for (std::size_t c = 0; c < dh; ++c) concat.data[hd * dh + c] += p * values.data[j * d + hd * dh + c];
      }
    }
    kernels::matmul(concat, wo, out);
  }

  const ParserModel& m_;
  std::vector<Matrix> cross_k_, cross_v_;
};

DecodeStep ParserModel::decode_step(std::span<const SkelTok> prefix, const Matrix& memory) const {
  if (prefix.empty() || prefix[0] != SkelTok::kBos) throw ShapeMismatch("prefix must start with BOS");
  IncrementalDecoder dec(*this, memory);
  auto state = dec.initial();
  DecodeStep out;
  for (std::size_t i = 0; i < prefix.size(); ++i) out = dec.step(state, prefix[i], i);
  return out;
}

Matrix ParserModel::teacher_forced_probs(std::span<const SkelTok> target, const Matrix& memory) const {
  Tape tape(false);
  auto* self = const_cast<ParserModel*>(this);
  const Var mem = tape.constant(memory);
  Matrix probs = self->output_logits(tape, self->decode_states(tape, target, mem)).value();
  kernels::softmax_rows(probs);
  return probs;
}

std::vector<ParserModel::Beam> ParserModel::beam_search(const Matrix& memory, int width) const {
  IncrementalDecoder dec(*this, memory);
  struct Live {
    Beam beam;
    IncrementalDecoder::State state;
  };
  std::vector<Live> live;
  live.push_back({{{SkelTok::kBos}, 0.0, {}}, dec.initial()});
  std::vector<Beam> finished;
  const auto max_len = static_cast<std::size_t>(config_.max_skeleton_len);
  const auto w = static_cast<std::size_t>(width);

  while (!live.empty()) {
    struct Cand {
      std::size_t beam;
      std::size_t tok;
      double logprob;
    };
    std::vector<Cand> cands;
    std::vector<DecodeStep> steps;
    for (std::size_t b = 0; b < live.size(); ++b) {
      auto& l = live[b];
      steps.push_back(dec.step(l.state, l.beam.tokens.back(), l.beam.tokens.size() - 1));
      for (std::size_t t = 0; t < kSkeletonVocabSize; ++t) {
        cands.push_back({b, t, l.beam.logprob + std::log(steps.back().probs[t])});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.logprob > b.logprob; });
    std::vector<Live> next;
    for (std::size_t i = 0; i < cands.size() && i < w; ++i) {
      const auto& c = cands[i];
      if (c.logprob == -std::numeric_limits<double>::infinity()) break;
      const auto& parent = live[c.beam];
      Beam nb{parent.beam.tokens, c.logprob, parent.beam.hidden};
      nb.tokens.push_back(static_cast<SkelTok>(c.tok));
      nb.hidden.push_back(steps[c.beam].hidden);
      if (nb.tokens.back() == SkelTok::kEos) {
        finished.push_back(std::move(nb));
      } else if (nb.tokens.size() < max_len) {
        next.push_back({std::move(nb), parent.state});
      }
    }
    live = std::move(next);
    if (finished.size() >= w) {
      std::vector<double> lps;
      for (const auto& f : finished) lps.push_back(f.logprob);
      std::nth_element(lps.begin(), lps.begin() + static_cast<std::ptrdiff_t>(w - 1), lps.end(),
                       std::greater<>());
      const double kth = lps[w - 1];
      bool can_improve = false;
      for (const auto& l : live) can_improve = can_improve || l.beam.logprob > kth;
      if (!can_improve) break;
    }
  }
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Beam& a, const Beam& b) { return a.logprob > b.logprob; });
  if (finished.size() > w) finished.resize(w);
  return finished;
}

std::vector<SketchCandidate> ParserModel::infer(std::span<const int> question_ids,
                                                const RelationMatrix& relations) const {
  const Matrix memory = encode_question(question_ids);
  const auto beams = beam_search(memory, config_.beam);
  const auto m = static_cast<std::size_t>(config_.shortlist);
  std::vector<SketchCandidate> out;
  for (const auto& beam : beams) {
    auto skeleton = try_parse(beam.tokens);
    if (!skeleton) continue;
    SketchCandidate base;
    base.skeleton = *std::move(skeleton);
    base.tokens = beam.tokens;
    base.sequence_logprob = beam.logprob;
    for (std::size_t row : link_positions(beam.tokens)) {
      Matrix logits;
      kernels::matmul_nt(row_matrix(beam.hidden[row]), relations.rows, logits);
      Matrix probs = logits;
      kernels::softmax_rows(probs);
      std::vector<std::size_t> order(probs.cols);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return probs.data[a] > probs.data[b]; });
      std::vector<SurfaceScore> ranked;
      for (std::size_t i = 0; i < order.size() && i < m; ++i) {
        ranked.push_back({order[i], probs.data[order[i]]});
      }
      base.link_logits.push_back(std::move(logits.data));
      base.ranked_surfaces.push_back(std::move(ranked));
    }
    // Cross product of shortlists in lexicographic rank order.
    std::vector<std::size_t> pick(base.ranked_surfaces.size(), 0);
    while (true) {
      SketchCandidate c = base;
      double score = std::exp(beam.logprob);
      for (std::size_t k = 0; k < pick.size(); ++k) {
        c.chosen.push_back(base.ranked_surfaces[k][pick[k]].surface);
        score *= base.ranked_surfaces[k][pick[k]].prob;
      }
      c.joint_score = score;
      out.push_back(std::move(c));
      bool advanced = false;
      for (std::size_t k = pick.size(); k-- > 0;) {
        if (++pick[k] < base.ranked_surfaces[k].size()) {
          advanced = true;
          break;
        }
        pick[k] = 0;
      }
      if (!advanced) break;
    }
  }
  if (out.empty()) throw NoValidSkeleton();
  std::stable_sort(out.begin(), out.end(), [](const SketchCandidate& a, const SketchCandidate& b) {
    return a.joint_score > b.joint_score;
  });
  if (out.size() > static_cast<std::size_t>(config_.candidate_cap)) {
    out.resize(static_cast<std::size_t>(config_.candidate_cap));
  }
  return out;
}

std::vector<SketchCandidate> ParserModel::infer(const std::string& question,
                                                const RelationMatrix& relations) const {
  auto words = tokenize(question);
  if (words.size() > static_cast<std::size_t>(config_.max_question_len)) {
    throw TooLong(words.size(), static_cast<std::size_t>(config_.max_question_len));
  }
  return infer(vocab_.encode(words), relations);
}

}  // namespace kbqa
