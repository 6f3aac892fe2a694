// syncasr/san.cc

// Copyright 2026   syncasr authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "syncasr/san.h"

#include <cmath>
#include <stdexcept>

namespace syncasr {

void SanConfig::Validate() const {
  auto fail = [](const std::string &field, const std::string &why) {
    throw ContractError("SanConfig." + field + ": " + why);
  };
  if (n_heads < 1) fail("n_heads", "must be >= 1");
  if (d_model < 1) fail("d_model", "must be >= 1");
  if (d_model % n_heads != 0) fail("d_model", "must be divisible by n_heads");
  if (d_ff < 1) fail("d_ff", "must be >= 1");
  if (d_feat < 1) fail("d_feat", "must be >= 1");
  if (encoder_layers < 0) fail("encoder_layers", "must be >= 0");
  if (decoder_layers < 1) fail("decoder_layers", "must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout", "must be in [0, 1)");
  if (!(proximity_tau > 0.0)) fail("proximity_tau", "must be positive");
  if (vocab.n_labels < 1) fail("vocab.n_labels", "must be >= 1");
}

OpCounters &Counters() {
  thread_local OpCounters counters;
  return counters;
}

Mat XavierUniform(int in, int out, Rng &rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Mat m(in, out);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = (2.0 * rng.Uniform() - 1.0) * a;
  return m;
}

Mat Gaussian(int rows, int cols, double stddev, Rng &rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.Normal();
  return m;
}

namespace {

Var MaybeDropout(Var x, double rate, Rng *rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  return Dropout(x, rate, *rng);
}

}  // namespace

RowVec LogSoftmax(const RowVec &logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

// ---------------------------------------------------------------------------

Linear::Linear(ParameterSet &params, const std::string &name, int in, int out,
               Rng &rng)
    : w_(&params.Add(name + ".weight", XavierUniform(in, out, rng))),
      b_(&params.Add(name + ".bias", Mat::Zero(1, out))) {}

Var Linear::Forward(Graph &g, Var x) const {
  return Add(MatMul(x, g.Param(*w_)), g.Param(*b_));
}

Mat Linear::Apply(const Mat &x) const {
  Mat y = x * w_->value;
  y.rowwise() += b_->value.row(0);
  return y;
}

LayerNormalization::LayerNormalization(ParameterSet &params,
                                       const std::string &name, int dim)
    : gain_(&params.Add(name + ".gain", Mat::Ones(1, dim))),
      bias_(&params.Add(name + ".bias", Mat::Zero(1, dim))) {}

Var LayerNormalization::Forward(Graph &g, Var x) const {
  return LayerNorm(x, g.Param(*gain_), g.Param(*bias_));
}

Mat LayerNormalization::Apply(const Mat &x) const {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    y.row(i) = (x.row(i).array() - mu) / std::sqrt(var + 1e-6);
  }
  y.array().rowwise() *= gain_->value.row(0).array();
  y.rowwise() += bias_->value.row(0);
  return y;
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(ParameterSet &params,
                                       const std::string &name,
                                       const SanConfig &config,
                                       bool proximity, Rng &rng)
    : heads_(config.n_heads),
      head_dim_(config.d_model / config.n_heads),
      wq_(params, name + ".query", config.d_model, config.d_model, rng),
      wk_(params, name + ".key", config.d_model, config.d_model, rng),
      wv_(params, name + ".value", config.d_model, config.d_model, rng),
      wo_(params, name + ".out", config.d_model, config.d_model, rng) {
  if (proximity)
    log_tau_ = &params.Add(
        name + ".log_tau",
        Mat::Constant(1, config.n_heads, std::log(config.proximity_tau)));
}

Var MultiHeadAttention::Forward(Graph &g, Var query, Var memory,
                                AttentionMask mask, double dropout, Rng *rng,
                                std::vector<Mat> *weights) const {
  if (mask == AttentionMask::kCausal && query.rows() != memory.rows())
    throw ContractError(
        "causal attention needs query and key over the same sequence, got " +
        std::to_string(query.rows()) + " queries and " +
        std::to_string(memory.rows()) + " keys");
  Var q = wq_.Forward(g, query);
  Var k = wk_.Forward(g, memory);
  Var v = wv_.Forward(g, memory);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  std::vector<Var> outputs;
  for (int h = 0; h < heads_; ++h) {
    Var qh = SliceCols(q, h * head_dim_, head_dim_);
    Var kh = SliceCols(k, h * head_dim_, head_dim_);
    Var vh = SliceCols(v, h * head_dim_, head_dim_);
    Var scores = Scale(MatMulNT(qh, kh), scale);
    if (log_tau_ != nullptr)
      scores = ProximityBias(scores, SliceCols(g.Param(*log_tau_), h, 1), 0);
    Var p = SoftmaxRows(scores, mask == AttentionMask::kCausal ? 0 : -1);
    if (weights != nullptr) weights->push_back(p.value());
    p = MaybeDropout(p, dropout, rng);
    outputs.push_back(MatMul(p, vh));
  }
  return wo_.Forward(g, heads_ == 1 ? outputs[0] : ConcatCols(outputs));
}

KeyValue MultiHeadAttention::Project(const Mat &memory) const {
  return KeyValue{wk_.Apply(memory), wv_.Apply(memory)};
}

void MultiHeadAttention::Extend(const RowVec &memory_row, KeyValue &kv) const {
  const Eigen::Index n = kv.keys.rows();
  const Eigen::Index d = memory_row.size();
  kv.keys.conservativeResize(n + 1, d);
  kv.values.conservativeResize(n + 1, d);
  kv.keys.row(n) = wk_.Apply(memory_row);
  kv.values.row(n) = wv_.Apply(memory_row);
}

RowVec MultiHeadAttention::Attend(const RowVec &query, const KeyValue &kv,
                                  int query_pos) const {
  const RowVec q = wq_.Apply(query);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  const Eigen::Index n = kv.keys.rows();
  RowVec context(q.size());
  for (int h = 0; h < heads_; ++h) {
    Eigen::VectorXd scores =
        kv.keys.middleCols(h * head_dim_, head_dim_) *
        q.segment(h * head_dim_, head_dim_).transpose() * scale;
    if (log_tau_ != nullptr) {
      const double tau = std::exp(log_tau_->value(0, h));
      for (Eigen::Index j = 0; j < n; ++j)
        scores(j) -= std::abs(static_cast<double>(query_pos - j)) / tau;
    }
    const double m = scores.maxCoeff();
    Eigen::VectorXd p = (scores.array() - m).exp();
    p /= p.sum();
    context.segment(h * head_dim_, head_dim_) =
        p.transpose() * kv.values.middleCols(h * head_dim_, head_dim_);
  }
  return wo_.Apply(context);
}

FeedForward::FeedForward(ParameterSet &params, const std::string &name,
                         const SanConfig &config, Rng &rng)
    : in_(params, name + ".in", config.d_model, config.d_ff, rng),
      out_(params, name + ".out", config.d_ff, config.d_model, rng) {}

Var FeedForward::Forward(Graph &g, Var x, double dropout, Rng *rng) const {
  Var hidden = MaybeDropout(Relu(in_.Forward(g, x)), dropout, rng);
  return out_.Forward(g, hidden);
}

Mat FeedForward::Apply(const Mat &x) const {
  return out_.Apply(in_.Apply(x).cwiseMax(0.0));
}

// ---------------------------------------------------------------------------

EncoderLayer::EncoderLayer(ParameterSet &params, const std::string &name,
                           const SanConfig &config, Rng &rng)
    : dropout_(config.dropout),
      ln_attn_(params, name + ".ln_attn", config.d_model),
      ln_ff_(params, name + ".ln_ff", config.d_model),
      attn_(params, name + ".attn", config, true, rng),
      ff_(params, name + ".ff", config, rng) {}

Var EncoderLayer::Forward(Graph &g, Var x, bool train, Rng *rng) const {
  Rng *r = train ? rng : nullptr;
  Var n = ln_attn_.Forward(g, x);
  x = Add(x, MaybeDropout(attn_.Forward(g, n, n, AttentionMask::kNone,
                                        dropout_, r),
                          dropout_, r));
  Var f = ff_.Forward(g, ln_ff_.Forward(g, x), dropout_, r);
  return Add(x, MaybeDropout(f, dropout_, r));
}

Encoder::Encoder(ParameterSet &params, const std::string &name,
                 const SanConfig &config, Rng &rng)
    : d_feat_(config.d_feat) {
  const int d = config.d_model;
  conv1_k_ = &params.Add(name + ".conv1.kernel",
                         XavierUniform(3 * config.d_feat, d, rng));
  conv1_b_ = &params.Add(name + ".conv1.bias", Mat::Zero(1, d));
  conv2_k_ = &params.Add(name + ".conv2.kernel", XavierUniform(3 * d, d, rng));
  conv2_b_ = &params.Add(name + ".conv2.bias", Mat::Zero(1, d));
  const int n_lower = config.encoder_layers / 2;
  for (int i = 0; i < n_lower; ++i)
    lower_.emplace_back(params, name + ".lower" + std::to_string(i), config,
                        rng);
  merge_ = Linear(params, name + ".merge", 2 * d, d, rng);
  for (int i = n_lower; i < config.encoder_layers; ++i)
    upper_.emplace_back(params, name + ".upper" + std::to_string(i), config,
                        rng);
  final_ln_ = LayerNormalization(params, name + ".final_ln", d);
}

Var Encoder::Forward(Graph &g, Var features, bool train, Rng *rng) const {
  if (features.rows() < 8)
    throw UtteranceTooShort("encoder needs at least 8 frames, got " +
                            std::to_string(features.rows()));
  if (features.cols() != d_feat_)
    throw DimensionError("encoder expects d_feat " + std::to_string(d_feat_) +
                         ", got features " + ShapeString(features.value()));
  Var x = Relu(Conv1d(features, g.Param(*conv1_k_), g.Param(*conv1_b_), 3, 2,
                      Padding::kSame));
  x = Relu(Conv1d(x, g.Param(*conv2_k_), g.Param(*conv2_b_), 3, 2,
                  Padding::kSame));
  for (const EncoderLayer &layer : lower_) x = layer.Forward(g, x, train, rng);
  x = merge_.Forward(g, PairConcat(x));
  for (const EncoderLayer &layer : upper_) x = layer.Forward(g, x, train, rng);
  return final_ln_.Forward(g, x);
}

EncodedSequence Encoder::Encode(const Mat &features) const {
  Graph g(false);
  Var h = Forward(g, g.Constant(features), false, nullptr);
  return EncodedSequence{h.value(), static_cast<int>(features.rows())};
}

std::vector<EncodedSequence> Encoder::EncodeBatch(
    const std::vector<Mat> &features) const {
  std::vector<EncodedSequence> out;
  out.reserve(features.size());
  for (const Mat &f : features) out.push_back(Encode(f));
  return out;
}

// ---------------------------------------------------------------------------

DecoderStack::DecoderStack(ParameterSet &params, const std::string &name,
                           const SanConfig &config, int layers,
                           bool cross_attention, Rng &rng)
    : cross_(cross_attention), dropout_(config.dropout) {
  const int d = config.d_model;
  for (int l = 0; l < layers; ++l) {
    const std::string p = name + ".block" + std::to_string(l);
    Block b;
    b.ln_self = LayerNormalization(params, p + ".ln_self", d);
    b.self_attn = MultiHeadAttention(params, p + ".self_attn", config, true, rng);
    if (cross_) {
      b.ln_cross = LayerNormalization(params, p + ".ln_cross", d);
      b.cross_attn =
          MultiHeadAttention(params, p + ".cross_attn", config, false, rng);
    }
    b.ln_ff = LayerNormalization(params, p + ".ln_ff", d);
    b.ff = FeedForward(params, p + ".ff", config, rng);
    blocks_.push_back(std::move(b));
  }
  final_ln_ = LayerNormalization(params, name + ".final_ln", d);
}

Var DecoderStack::Forward(Graph &g, Var inputs, Var memory, bool train,
                          Rng *rng, std::vector<Mat> *cross_weights) const {
  Rng *r = train ? rng : nullptr;
  Var x = inputs;
  for (const Block &b : blocks_) {
    Var n = b.ln_self.Forward(g, x);
    x = Add(x, MaybeDropout(b.self_attn.Forward(g, n, n, AttentionMask::kCausal,
                                                dropout_, r),
                            dropout_, r));
    if (cross_) {
      Var q = b.ln_cross.Forward(g, x);
      Counters().cross_attention_scores +=
          static_cast<std::uint64_t>(q.rows() * memory.rows());
      x = Add(x, MaybeDropout(b.cross_attn.Forward(g, q, memory,
                                                   AttentionMask::kNone,
                                                   dropout_, r, cross_weights),
                              dropout_, r));
    }
    Var f = b.ff.Forward(g, b.ln_ff.Forward(g, x), dropout_, r);
    x = Add(x, MaybeDropout(f, dropout_, r));
  }
  return final_ln_.Forward(g, x);
}

DecoderStack::Cache DecoderStack::Start(const Mat *memory) const {
  Cache cache;
  for (const Block &b : blocks_) {
    KeyValue empty;
    empty.keys.resize(0, 0);
    empty.values.resize(0, 0);
    cache.self.push_back(std::move(empty));
    if (cross_) {
      if (memory == nullptr)
        throw ContractError("cross-attention decoder started without memory");
      cache.cross.push_back(b.cross_attn.Project(*memory));
    }
  }
  return cache;
}

RowVec DecoderStack::Step(const RowVec &input, Cache &cache) const {
  if (cache.self.size() != blocks_.size())
    throw ContractError("decoder cache has " +
                        std::to_string(cache.self.size()) + " layers, model " +
                        std::to_string(blocks_.size()));
  const int pos = cache.length;
  Mat x = input;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block &b = blocks_[l];
    const Mat n = b.ln_self.Apply(x);
    b.self_attn.Extend(n.row(0), cache.self[l]);
    x += b.self_attn.Attend(n.row(0), cache.self[l], pos);
    if (cross_) {
      const Mat q = b.ln_cross.Apply(x);
      Counters().cross_attention_scores +=
          static_cast<std::uint64_t>(cache.cross[l].keys.rows());
      x += b.cross_attn.Attend(q.row(0), cache.cross[l], 0);
    }
    x += b.ff.Apply(b.ln_ff.Apply(x));
  }
  ++cache.length;
  return final_ln_.Apply(x).row(0);
}

// ---------------------------------------------------------------------------

TransformerModel::TransformerModel(const SanConfig &config, std::uint64_t seed)
    : config_(config) {
  config_.Validate();
  Rng rng = Rng(seed).Derive("init");
  const int d = config_.d_model, vocab = config_.vocab.size();
  encoder_ = Encoder(params_, "encoder", config_, rng);
  ctc_head_ = Linear(params_, "ctc", d, vocab, rng);
  embedding_ = &params_.Add("decoder.embedding", Gaussian(vocab, d, 1.0, rng));
  decoder_ = DecoderStack(params_, "decoder", config_, config_.decoder_layers,
                          true, rng);
  output_ = Linear(params_, "decoder.output", d, vocab, rng);
}

Var TransformerModel::CtcLogits(Graph &g, Var encoded) const {
  return ctc_head_.Forward(g, encoded);
}

Var TransformerModel::DecoderLogits(Graph &g, Var encoded,
                                    const std::vector<int> &inputs, bool train,
                                    Rng *rng) const {
  Var x = GatherRows(g.Param(*embedding_), inputs);
  return output_.Forward(g, decoder_.Forward(g, x, encoded, train, rng));
}

DecoderCache TransformerModel::StartDecoding(const EncodedSequence &enc) const {
  DecoderCache cache;
  cache.stack = decoder_.Start(&enc.h);
  cache.encoder_steps = static_cast<int>(enc.h.rows());
  return cache;
}

RowVec TransformerModel::DecoderStep(const std::vector<int> &prefix,
                                     DecoderCache &cache) const {
  if (static_cast<std::size_t>(cache.stack.length) != prefix.size())
    throw ContractError("decoder cache holds " +
                        std::to_string(cache.stack.length) +
                        " positions but the prefix has " +
                        std::to_string(prefix.size()) + " labels");
  const int input = prefix.empty() ? config_.vocab.eos() : prefix.back();
  if (input < 0 || input >= config_.vocab.size())
    throw std::out_of_range("label " + std::to_string(input) +
                            " outside vocabulary");
  const RowVec h = decoder_.Step(embedding_->value.row(input), cache.stack);
  return output_.Apply(h).row(0);
}

// ---------------------------------------------------------------------------

SanLm::SanLm(const SanConfig &config, std::uint64_t seed) : config_(config) {
  config_.Validate();
  Rng rng = Rng(seed).Derive("init");
  const int d = config_.d_model, vocab = config_.vocab.size();
  embedding_ = &params_.Add("lm.embedding", Gaussian(vocab, d, 1.0, rng));
  stack_ = DecoderStack(params_, "lm", config_, config_.decoder_layers, false,
                        rng);
  output_ = Linear(params_, "lm.output", d, vocab, rng);
}

Var SanLm::Logits(Graph &g, const std::vector<int> &inputs, bool train,
                  Rng *rng) const {
  Var x = GatherRows(g.Param(*embedding_), inputs);
  return output_.Forward(g, stack_.Forward(g, x, Var(), train, rng));
}

void SanLm::CheckLabels(const std::vector<int> &labels) const {
  for (int y : labels)
    if (!config_.vocab.IsLabel(y))
      throw std::out_of_range("label " + std::to_string(y) +
                              " outside LM vocabulary of " +
                              std::to_string(config_.vocab.n_labels));
}

RowVec SanLm::StepLogits(int input, DecoderStack::Cache &cache) const {
  const RowVec h = stack_.Step(embedding_->value.row(input), cache);
  return output_.Apply(h).row(0);
}

RowVec SanLm::NextLogProbs(const std::vector<int> &prefix) const {
  CheckLabels(prefix);
  DecoderStack::Cache cache = Start();
  RowVec logits = StepLogits(config_.vocab.eos(), cache);
  for (int y : prefix) logits = StepLogits(y, cache);
  return LogSoftmax(logits);
}

double SanLm::SequenceScore(const std::vector<int> &labels) const {
  CheckLabels(labels);
  DecoderStack::Cache cache = Start();
  double score = 0.0;
  int input = config_.vocab.eos();
  for (std::size_t i = 0; i <= labels.size(); ++i) {
    const RowVec lp = LogSoftmax(StepLogits(input, cache));
    const int target = i < labels.size() ? labels[i] : config_.vocab.eos();
    score += lp(target);
    input = target;
  }
  return score;
}

double SanLm::SequenceScoreFull(const std::vector<int> &labels) const {
  CheckLabels(labels);
  std::vector<int> inputs{config_.vocab.eos()};
  inputs.insert(inputs.end(), labels.begin(), labels.end());
  Graph g(false);
  Var lp = LogSoftmaxRows(Logits(g, inputs, false, nullptr));
  double score = 0.0;
  for (std::size_t i = 0; i <= labels.size(); ++i) {
    const int target = i < labels.size() ? labels[i] : config_.vocab.eos();
    score += lp.value()(static_cast<Eigen::Index>(i), target);
  }
  return score;
}

}  // namespace syncasr
