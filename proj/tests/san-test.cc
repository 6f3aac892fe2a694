// tests/san-test.cc

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

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "syncasr/checkpoint.h"
#include "syncasr/grad-check.h"
#include "syncasr/san.h"

namespace syncasr {
namespace {

Mat RandomMat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal();
  return m;
}

SanConfig SmallConfig() {
  SanConfig c;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.d_feat = 5;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.dropout = 0.0;
  c.vocab.n_labels = 4;
  return c;
}

TEST(Attention, ZeroQueryKeyAveragesValues) {
  SanConfig c = SmallConfig();
  ParameterSet params;
  Rng rng(3);
  MultiHeadAttention attn(params, "a", c, false, rng);
  params.Find("a.query.weight")->value.setZero();
  params.Find("a.key.weight")->value.setZero();
  const Mat query = RandomMat(3, c.d_model, 1);
  const Mat memory = RandomMat(5, c.d_model, 2);

  Graph g(false);
  Var out = attn.Forward(g, g.Constant(query), g.Constant(memory),
                         AttentionMask::kNone, 0.0, nullptr);
  // Uniform weights: every row is the output projection of the mean value.
  const Parameter *wv = params.Find("a.value.weight");
  const Parameter *bv = params.Find("a.value.bias");
  const Parameter *wo = params.Find("a.out.weight");
  const Parameter *bo = params.Find("a.out.bias");
  const RowVec mean_v = memory.colwise().mean() * wv->value + bv->value;
  const RowVec expected = mean_v * wo->value + bo->value;
  for (Eigen::Index i = 0; i < 3; ++i)
    EXPECT_LT((out.value().row(i) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, CausalWeightsAreExactlyZeroAndRowsSumToOne) {
  SanConfig c = SmallConfig();
  ParameterSet params;
  Rng rng(4);
  MultiHeadAttention attn(params, "a", c, true, rng);
  const Mat x = RandomMat(6, c.d_model, 5);
  Graph g(false);
  std::vector<Mat> weights;
  attn.Forward(g, g.Constant(x), g.Constant(x), AttentionMask::kCausal, 0.0,
               nullptr, &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (const Mat &w : weights)
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-12);
      for (Eigen::Index j = i + 1; j < w.cols(); ++j) EXPECT_EQ(w(i, j), 0.0);
    }
}

TEST(Attention, LargeTemperatureRecoversPlainAttention) {
  SanConfig c = SmallConfig();
  ParameterSet with, without;
  Rng r1(9), r2(9);
  MultiHeadAttention prox(with, "a", c, true, r1);
  MultiHeadAttention plain(without, "a", c, false, r2);
  with.Find("a.log_tau")->value.setConstant(std::log(1e9));
  const Mat x = RandomMat(7, c.d_model, 6);
  Graph g(false);
  Var a = prox.Forward(g, g.Constant(x), g.Constant(x), AttentionMask::kNone,
                       0.0, nullptr);
  Var b = plain.Forward(g, g.Constant(x), g.Constant(x), AttentionMask::kNone,
                        0.0, nullptr);
  EXPECT_LT((a.value() - b.value()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Attention, CausalMaskNeedsSameSequence) {
  SanConfig c = SmallConfig();
  ParameterSet params;
  Rng rng(4);
  MultiHeadAttention attn(params, "a", c, true, rng);
  Graph g(false);
  EXPECT_THROW(attn.Forward(g, g.Constant(RandomMat(3, c.d_model, 1)),
                            g.Constant(RandomMat(4, c.d_model, 2)),
                            AttentionMask::kCausal, 0.0, nullptr),
               ContractError);
}

TEST(Encoder, OutputLengthIsCeilingOfEighth) {
  SanConfig c = SmallConfig();
  TransformerModel model(c, 1);
  EXPECT_EQ(model.encoder().Encode(RandomMat(16, c.d_feat, 1)).h.rows(), 2);
  EXPECT_EQ(model.encoder().Encode(RandomMat(17, c.d_feat, 1)).h.rows(), 3);
  for (int t = 8; t <= 41; ++t) {
    EncodedSequence e = model.encoder().Encode(RandomMat(t, c.d_feat, t));
    EXPECT_EQ(e.h.rows(), (t + 7) / 8) << "T=" << t;
    EXPECT_EQ(e.frames, t);
    EXPECT_EQ(Encoder::OutputLength(t), (t + 7) / 8);
  }
  EXPECT_THROW(model.encoder().Encode(RandomMat(7, c.d_feat, 1)),
               UtteranceTooShort);
}

TEST(Encoder, BatchPermutationPermutesOutputs) {
  SanConfig c = SmallConfig();
  TransformerModel model(c, 2);
  std::vector<Mat> batch{RandomMat(12, c.d_feat, 1), RandomMat(30, c.d_feat, 2),
                         RandomMat(19, c.d_feat, 3)};
  std::vector<Mat> permuted{batch[2], batch[0], batch[1]};
  auto a = model.encoder().EncodeBatch(batch);
  auto b = model.encoder().EncodeBatch(permuted);
  EXPECT_EQ(a[2].h, b[0].h);
  EXPECT_EQ(a[0].h, b[1].h);
  EXPECT_EQ(a[1].h, b[2].h);
}

TEST(Decoder, IncrementalMatchesFullRecompute) {
  SanConfig c = SmallConfig();
  TransformerModel model(c, 3);
  EncodedSequence enc = model.encoder().Encode(RandomMat(40, c.d_feat, 7));
  const std::vector<int> labels{2, 0, 3, 1, 1, 2};
  std::vector<int> inputs{c.vocab.eos()};
  inputs.insert(inputs.end(), labels.begin(), labels.end() - 1);

  Graph g(false);
  Var full = model.DecoderLogits(g, g.Constant(enc.h), inputs, false, nullptr);

  DecoderCache cache = model.StartDecoding(enc);
  std::vector<int> prefix;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    RowVec step = model.DecoderStep(prefix, cache);
    EXPECT_LT((step - full.value().row(static_cast<Eigen::Index>(i)))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-9);
    prefix.push_back(labels[i]);
    for (const KeyValue &kv : cache.stack.self)
      EXPECT_EQ(kv.keys.rows(), static_cast<Eigen::Index>(i + 1));
  }
}

TEST(Decoder, StartIsFiniteDeterministicAndChecksPrefix) {
  SanConfig c = SmallConfig();
  TransformerModel model(c, 4);
  EncodedSequence enc = model.encoder().Encode(RandomMat(24, c.d_feat, 8));
  DecoderCache c1 = model.StartDecoding(enc), c2 = model.StartDecoding(enc);
  RowVec a = model.DecoderStep({}, c1);
  RowVec b = model.DecoderStep({}, c2);
  EXPECT_TRUE(a.allFinite());
  EXPECT_EQ(a, b);
  EXPECT_THROW(model.DecoderStep({}, c1), ContractError);
  EXPECT_THROW(model.DecoderStep({1, 2}, c1), ContractError);
}

TEST(Decoder, CrossAttentionWorkIsCountedPerLayer) {
  SanConfig c = SmallConfig();
  TransformerModel model(c, 4);
  EncodedSequence enc = model.encoder().Encode(RandomMat(40, c.d_feat, 8));
  DecoderCache cache = model.StartDecoding(enc);
  Counters().Reset();
  std::vector<int> prefix;
  for (int i = 0; i < 3; ++i) {
    model.DecoderStep(prefix, cache);
    prefix.push_back(i);
  }
  EXPECT_EQ(Counters().cross_attention_scores,
            static_cast<std::uint64_t>(3 * c.decoder_layers * enc.h.rows()));
}

TEST(Lm, IncrementalMatchesFullAndChainRule) {
  SanConfig c = SmallConfig();
  SanLm lm(c, 5);
  const std::vector<int> y{1, 3, 0, 2};
  EXPECT_NEAR(lm.SequenceScore(y), lm.SequenceScoreFull(y), 1e-9);

  double chain = 0.0;
  std::vector<int> prefix;
  for (int label : y) {
    chain += lm.NextLogProbs(prefix)(label);
    prefix.push_back(label);
  }
  chain += lm.NextLogProbs(prefix)(c.vocab.eos());
  EXPECT_NEAR(lm.SequenceScore(y), chain, 1e-12);

  std::vector<int> y2 = y;
  y2.push_back(1);
  const double with_label = lm.SequenceScore(y2);
  const double expected = chain - lm.NextLogProbs(y)(c.vocab.eos()) +
                          lm.NextLogProbs(y)(1) +
                          lm.NextLogProbs(y2)(c.vocab.eos());
  EXPECT_NEAR(with_label, expected, 1e-12);
}

TEST(Lm, ZeroWeightsGiveUniformScores) {
  SanConfig c = SmallConfig();
  SanLm lm(c, 5);
  for (Parameter *p : lm.params().All()) p->value.setZero();
  const std::vector<int> y{1, 3, 0};
  const double v = static_cast<double>(c.vocab.size());
  // Three labels plus end-of-sentence.
  EXPECT_NEAR(lm.SequenceScore(y), -4.0 * std::log(v), 1e-12);
  EXPECT_THROW(lm.SequenceScore({0, 7}), std::out_of_range);
  EXPECT_THROW(lm.SequenceScore({-1}), std::out_of_range);
}

TEST(GradientCheck, EncoderLayerAndDecoderBlock) {
  SanConfig c = SmallConfig();
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.d_feat = 3;
  c.vocab.n_labels = 3;
  TransformerModel model(c, 6);
  const Mat features = RandomMat(9, c.d_feat, 10);
  const std::vector<int> inputs{c.vocab.eos(), 1, 0};
  const std::vector<int> targets{1, 0, 2};
  Mat onehot = Mat::Zero(3, c.vocab.size());
  for (int i = 0; i < 3; ++i) onehot(i, targets[i]) = 1.0;
  auto loss = [&](Graph &g) {
    Var enc = model.encoder().Forward(g, g.Constant(features), false, nullptr);
    Var lp = LogSoftmaxRows(model.DecoderLogits(g, enc, inputs, false, nullptr));
    return Scale(Sum(Mul(lp, g.Constant(onehot))), -1.0);
  };
  // Key biases shift every score of a query equally, so their true gradient
  // is 0 and the finite difference is pure round-off.
  std::vector<Parameter *> probed;
  for (Parameter *p : model.params().All())
    if (!p->name.ends_with("key.bias")) probed.push_back(p);
  EXPECT_LT(GradCheckParams(loss, probed, 1e-5, 6), 1e-4);
}

TEST(Checkpoint, BitExactRoundTripAndCorruption) {
  SanConfig c = SmallConfig();
  TransformerModel a(c, 11), b(c, 12);
  const std::string path =
      (std::filesystem::temp_directory_path() / "san-test.ckpt").string();
  WriteCheckpoint(path, Snapshot(a.params()));
  Restore(b.params(), ReadCheckpoint(path));
  auto pa = a.params().All();
  auto pb = b.params().All();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ(pa[i]->value.size(), pb[i]->value.size());
    EXPECT_EQ(std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                          sizeof(double) * pa[i]->value.size()),
              0)
        << pa[i]->name;
  }

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  EXPECT_THROW(ReadCheckpoint(path), FormatError);

  WriteCheckpoint(path, Snapshot(a.params()));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(ReadCheckpoint(path), FormatError);
  std::remove(path.c_str());
}

}  // namespace
}  // namespace syncasr
