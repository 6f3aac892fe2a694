// syncasr/san.h

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

// Self-attention network (SAN) building blocks shared by the label-synchronous
// transformer, the CIF model's decoder and the SAN language model.
//
// Every block has two evaluation routes over the same parameters: a graph
// route (Forward) used for training and full-sequence scoring, and a plain
// Eigen route (Step) used for cached incremental decoding.  Equivalence of the
// two routes is a tested invariant.

#ifndef SYNCASR_SAN_H_
#define SYNCASR_SAN_H_

#include <cstdint>
#include <string>
#include <vector>

#include "syncasr/checkpoint.h"
#include "syncasr/rng.h"
#include "syncasr/tensor.h"

namespace syncasr {

class UtteranceTooShort : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Label inventory: real labels 0..n-1 followed by end-of-sentence, CTC blank
/// and padding.  End-of-sentence doubles as the decoder start symbol.
struct Vocab {
  int n_labels = 16;

  int eos() const { return n_labels; }
  int blank() const { return n_labels + 1; }
  int pad() const { return n_labels + 2; }
  int size() const { return n_labels + 3; }
  bool IsLabel(int y) const { return y >= 0 && y < n_labels; }
};

struct SanConfig {
  int n_heads = 4;
  int d_model = 32;
  int d_ff = 128;
  int d_feat = 20;
  /// SAN layers in the encoder, split evenly around the pair-concatenation
  /// downsampling.
  int encoder_layers = 4;
  /// Decoder blocks (N_d).
  int decoder_layers = 3;
  double dropout = 0.1;
  /// Initial proximity temperature of every head.
  double proximity_tau = 4.0;
  Vocab vocab;

  /// Throws ContractError naming the offending field.
  void Validate() const;
};

/// Thread-local counters of attention work, for complexity measurements.
struct OpCounters {
  /// Query-key scores computed by decoder-side encoder-decoder attention,
  /// counted once per layer (not per head).
  std::uint64_t cross_attention_scores = 0;
  /// Encoder steps scanned by integrate-and-fire.
  std::uint64_t cif_steps = 0;
  void Reset() { *this = OpCounters(); }
};
OpCounters &Counters();

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet &params, const std::string &name, int in, int out,
         Rng &rng);

  Var Forward(Graph &g, Var x) const;
  Mat Apply(const Mat &x) const;

  Parameter *weight() const { return w_; }
  Parameter *bias() const { return b_; }

 private:
  Parameter *w_ = nullptr;
  Parameter *b_ = nullptr;
};

class LayerNormalization {
 public:
  LayerNormalization() = default;
  LayerNormalization(ParameterSet &params, const std::string &name, int dim);

  Var Forward(Graph &g, Var x) const;
  Mat Apply(const Mat &x) const;

 private:
  Parameter *gain_ = nullptr;
  Parameter *bias_ = nullptr;
};

enum class AttentionMask { kNone, kCausal };

/// Per-layer attention inputs needed by incremental decoding: projected keys
/// and values, one row per attended position.
struct KeyValue {
  Mat keys;
  Mat values;
};

/// Multi-head scaled dot-product attention.  With proximity enabled each head
/// h adds -|i - j| / tau_h to its logits, tau_h = exp(log_tau_h) learnable.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet &params, const std::string &name,
                     const SanConfig &config, bool proximity, Rng &rng);

  /// query [s x d] attends over memory [u x d].  A causal mask requires
  /// s == u (query and memory index the same sequence).  When `weights` is
  /// non-null it receives the per-head attention matrices.
  Var Forward(Graph &g, Var query, Var memory, AttentionMask mask,
              double dropout, Rng *rng,
              std::vector<Mat> *weights = nullptr) const;

  KeyValue Project(const Mat &memory) const;
  /// Appends the projection of one memory row.
  void Extend(const RowVec &memory_row, KeyValue &kv) const;
  /// One query row at absolute position `query_pos` over all rows of `kv`.
  RowVec Attend(const RowVec &query, const KeyValue &kv, int query_pos) const;

  bool proximity() const { return log_tau_ != nullptr; }
  int heads() const { return heads_; }

 private:
  int heads_ = 1;
  int head_dim_ = 1;
  Linear wq_, wk_, wv_, wo_;
  Parameter *log_tau_ = nullptr;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterSet &params, const std::string &name,
              const SanConfig &config, Rng &rng);
  Var Forward(Graph &g, Var x, double dropout, Rng *rng) const;
  Mat Apply(const Mat &x) const;

 private:
  Linear in_, out_;
};

/// Pre-norm SAN layer: self-attention with proximity bias, then feed-forward,
/// each wrapped in a residual connection.
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParameterSet &params, const std::string &name,
               const SanConfig &config, Rng &rng);
  Var Forward(Graph &g, Var x, bool train, Rng *rng) const;

 private:
  double dropout_ = 0.0;
  LayerNormalization ln_attn_, ln_ff_;
  MultiHeadAttention attn_;
  FeedForward ff_;
};

struct EncodedSequence {
  Mat h;       ///< U x d_model
  int frames;  ///< original frame count T; U == ceil(T / 8)
};

/// Convolutional front-end (two width-3 stride-2 convolutions, 1/4 rate),
/// SAN layers, adjacent-pair concatenation (1/2 rate), more SAN layers.
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterSet &params, const std::string &name,
          const SanConfig &config, Rng &rng);

  /// features [T x d_feat] -> [ceil(T/8) x d_model].  Throws
  /// UtteranceTooShort when T < 8.
  Var Forward(Graph &g, Var features, bool train, Rng *rng) const;
  EncodedSequence Encode(const Mat &features) const;
  /// Independent encodes, one per utterance; order is preserved.
  std::vector<EncodedSequence> EncodeBatch(
      const std::vector<Mat> &features) const;

  static int OutputLength(int frames) { return (frames + 7) / 8; }

 private:
  int d_feat_ = 0;
  Parameter *conv1_k_ = nullptr, *conv1_b_ = nullptr;
  Parameter *conv2_k_ = nullptr, *conv2_b_ = nullptr;
  std::vector<EncoderLayer> lower_, upper_;
  Linear merge_;
  LayerNormalization final_ln_;
};

/// Stack of pre-norm decoder blocks: causal self-attention with proximity
/// bias, optional encoder-decoder attention, feed-forward; final layer norm.
class DecoderStack {
 public:
  struct Cache {
    std::vector<KeyValue> self;   ///< per layer; rows == positions decoded
    std::vector<KeyValue> cross;  ///< per layer; encoder-side keys/values
    int length = 0;
  };

  DecoderStack() = default;
  DecoderStack(ParameterSet &params, const std::string &name,
               const SanConfig &config, int layers, bool cross_attention,
               Rng &rng);

  /// inputs [S x d] -> [S x d]; `memory` is ignored without cross attention.
  Var Forward(Graph &g, Var inputs, Var memory, bool train, Rng *rng,
              std::vector<Mat> *cross_weights = nullptr) const;

  Cache Start(const Mat *memory) const;
  /// Processes the input of position cache.length and grows the cache by 1.
  RowVec Step(const RowVec &input, Cache &cache) const;

  int layers() const { return static_cast<int>(blocks_.size()); }
  bool cross_attention() const { return cross_; }

 private:
  struct Block {
    LayerNormalization ln_self, ln_cross, ln_ff;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ff;
  };
  bool cross_ = false;
  double dropout_ = 0.0;
  std::vector<Block> blocks_;
  LayerNormalization final_ln_;
};

/// Incremental decoding state of the transformer decoder.
struct DecoderCache {
  DecoderStack::Cache stack;
  int encoder_steps = 0;
};

/// Label-synchronous encoder-decoder transformer with an auxiliary CTC head.
class TransformerModel {
 public:
  explicit TransformerModel(const SanConfig &config, std::uint64_t seed = 1);

  const SanConfig &config() const { return config_; }
  ParameterSet &params() { return params_; }
  const ParameterSet &params() const { return params_; }
  const Encoder &encoder() const { return encoder_; }
  const DecoderStack &decoder() const { return decoder_; }

  Var CtcLogits(Graph &g, Var encoded) const;
  /// Teacher-forced decoder: inputs [S x label ids] -> logits [S x vocab].
  Var DecoderLogits(Graph &g, Var encoded, const std::vector<int> &inputs,
                    bool train, Rng *rng) const;

  DecoderCache StartDecoding(const EncodedSequence &enc) const;
  /// One incremental step: feeds the last label of `prefix` (the start symbol
  /// when empty) and returns next-label logits.  Requires
  /// cache.stack.length == prefix.size().
  RowVec DecoderStep(const std::vector<int> &prefix, DecoderCache &cache) const;

 private:
  SanConfig config_;
  ParameterSet params_;
  Encoder encoder_;
  Linear ctc_head_;
  Parameter *embedding_ = nullptr;
  DecoderStack decoder_;
  Linear output_;
};

/// Decoder-only SAN language model over label sequences.
class SanLm {
 public:
  explicit SanLm(const SanConfig &config, std::uint64_t seed = 1);

  const SanConfig &config() const { return config_; }
  ParameterSet &params() { return params_; }
  const ParameterSet &params() const { return params_; }

  /// inputs (start symbol first) -> logits [S x vocab].
  Var Logits(Graph &g, const std::vector<int> &inputs, bool train,
             Rng *rng) const;

  /// log p(. | prefix) over the full vocabulary.
  RowVec NextLogProbs(const std::vector<int> &prefix) const;
  /// sum_i log p(y_i | y_<i) + log p(eos | y).  Throws on out-of-vocabulary.
  double SequenceScore(const std::vector<int> &labels) const;
  /// Same score through the full (non-incremental) graph route.
  double SequenceScoreFull(const std::vector<int> &labels) const;

  DecoderStack::Cache Start() const { return stack_.Start(nullptr); }
  RowVec StepLogits(int input, DecoderStack::Cache &cache) const;

 private:
  void CheckLabels(const std::vector<int> &labels) const;

  SanConfig config_;
  ParameterSet params_;
  Parameter *embedding_ = nullptr;
  DecoderStack stack_;
  Linear output_;
};

RowVec LogSoftmax(const RowVec &logits);

/// Uniform(-a, a) with a = sqrt(6 / (in + out)).
Mat XavierUniform(int in, int out, Rng &rng);
Mat Gaussian(int rows, int cols, double stddev, Rng &rng);

}  // namespace syncasr

#endif  // SYNCASR_SAN_H_
