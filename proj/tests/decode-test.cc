// tests/decode-test.cc

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

#include <algorithm>
#include <chrono>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

#include "syncasr/decode.h"

namespace syncasr {
namespace {

Mat RandomMat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal();
  return m;
}

SanConfig TinyConfig(int n_labels) {
  SanConfig c;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.d_feat = 4;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.dropout = 0.0;
  c.vocab.n_labels = n_labels;
  return c;
}

// Sharpen the randomly initialised output layer so scores are well separated.
void Sharpen(ParameterSet &params, const std::string &name, double factor) {
  params.Find(name + ".weight")->value *= factor;
}

// log p(y, eos) through the teacher-forced graph.
double TransformerSequenceScore(const TransformerModel &model,
                                const EncodedSequence &enc,
                                const std::vector<int> &labels) {
  const Vocab &v = model.config().vocab;
  std::vector<int> inputs{v.eos()};
  inputs.insert(inputs.end(), labels.begin(), labels.end());
  std::vector<int> targets = labels;
  targets.push_back(v.eos());
  Graph g(false);
  const Mat logits =
      model.DecoderLogits(g, g.Constant(enc.h), inputs, false, nullptr).value();
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    s += LogSoftmax(logits.row(static_cast<Eigen::Index>(i)))(targets[i]);
  return s;
}

double CifSequenceScore(const CifModel &model, const Mat &embeddings,
                        const std::vector<int> &labels) {
  std::vector<int> inputs{model.config().vocab.eos()};
  inputs.insert(inputs.end(), labels.begin(), labels.end() - 1);
  Graph g(false);
  const Mat logits =
      model.DecoderLogits(g, g.Constant(embeddings), inputs, false, nullptr)
          .value();
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    s += LogSoftmax(logits.row(static_cast<Eigen::Index>(i)))(labels[i]);
  return s;
}

std::vector<std::vector<int>> AllSequences(int alphabet, int max_len) {
  std::vector<std::vector<int>> out{{}};
  std::vector<std::vector<int>> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto &s : frontier)
      for (int y = 0; y < alphabet; ++y) {
        auto t = s;
        t.push_back(y);
        next.push_back(t);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

TEST(BeamSearch, BeamOneIsGreedy) {
  const SanConfig c = TinyConfig(5);
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    TransformerModel model(c, seed);
    Sharpen(model.params(), "decoder.output", 3.0);
    const EncodedSequence enc =
        model.encoder().Encode(RandomMat(40, c.d_feat, seed + 10));
    BeamConfig bc;
    bc.beam = 1;
    const auto hyps = BeamSearchLabelSync(model, enc, bc);
    ASSERT_EQ(hyps.size(), 1u);

    std::vector<int> greedy;
    double score = 0.0;
    DecoderCache cache = model.StartDecoding(enc);
    bool ended = false;
    for (int step = 0; step < DefaultMaxLen(5) && !ended; ++step) {
      const RowVec logp = LogSoftmax(model.DecoderStep(greedy, cache));
      Eigen::Index best;
      logp.head(c.vocab.n_labels + 1).maxCoeff(&best);
      score += logp(best);
      if (best == c.vocab.eos())
        ended = true;
      else
        greedy.push_back(static_cast<int>(best));
    }
    EXPECT_EQ(hyps[0].labels, greedy);
    EXPECT_EQ(hyps[0].truncated, !ended);
    EXPECT_NEAR(hyps[0].model_score, score, 1e-12);
  }
}

TEST(BeamSearch, WideBeamMatchesExhaustiveSearch) {
  // Two labels plus end-of-sentence: 3^3 == 27 covers every path of 3 steps.
  const SanConfig c = TinyConfig(2);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TransformerModel model(c, seed);
    Sharpen(model.params(), "decoder.output", 2.0);
    const EncodedSequence enc =
        model.encoder().Encode(RandomMat(24, c.d_feat, seed + 30));
    BeamConfig bc;
    bc.beam = 27;
    bc.max_len = 3;
    const auto hyps = BeamSearchLabelSync(model, enc, bc);

    std::vector<std::pair<double, std::vector<int>>> all;
    for (const auto &s : AllSequences(2, 2))
      all.emplace_back(TransformerSequenceScore(model, enc, s), s);
    std::stable_sort(all.begin(), all.end(), [](const auto &a, const auto &b) {
      return a.first > b.first;
    });
    ASSERT_EQ(hyps.size(), all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      EXPECT_EQ(hyps[i].labels, all[i].second) << "rank " << i;
      EXPECT_NEAR(hyps[i].model_score, all[i].first, 1e-9);
      EXPECT_FALSE(hyps[i].truncated);
    }
  }
}

TEST(BeamSearch, NbestSortedAndWithinBeam) {
  const SanConfig c = TinyConfig(6);
  TransformerModel model(c, 8);
  const EncodedSequence enc =
      model.encoder().Encode(RandomMat(64, c.d_feat, 9));
  BeamConfig bc;
  bc.beam = 4;
  const auto hyps = BeamSearchLabelSync(model, enc, bc);
  ASSERT_FALSE(hyps.empty());
  EXPECT_LE(hyps.size(), 4u);
  for (std::size_t i = 1; i < hyps.size(); ++i)
    EXPECT_GE(hyps[i - 1].combined, hyps[i].combined);
  for (const Hypothesis &h : hyps) {
    EXPECT_LE(static_cast<int>(h.labels.size()), DefaultMaxLen(8));
    for (int y : h.labels) EXPECT_TRUE(c.vocab.IsLabel(y));
  }
}

TEST(BeamSearch, NoEndOfSentenceGivesTruncatedHypothesis) {
  const SanConfig c = TinyConfig(3);
  TransformerModel model(c, 4);
  model.params().Find("decoder.output.bias")->value(0, c.vocab.eos()) = -1e3;
  const EncodedSequence enc =
      model.encoder().Encode(RandomMat(16, c.d_feat, 5));
  BeamConfig bc;
  bc.beam = 3;
  bc.max_len = 5;
  const auto hyps = BeamSearchLabelSync(model, enc, bc);
  ASSERT_EQ(hyps.size(), 1u);
  EXPECT_TRUE(hyps[0].truncated);
  EXPECT_EQ(hyps[0].labels.size(), 5u);
  EXPECT_EQ(DefaultMaxLen(2), 13);
  EXPECT_EQ(DefaultMaxLen(10), 22);
  bc.beam = 0;
  EXPECT_THROW(BeamSearchLabelSync(model, enc, bc), ContractError);
}

TEST(FrameSync, LengthEqualsFireCount) {
  const SanConfig c = TinyConfig(4);
  CifModel model(c, 3);
  BeamConfig bc;
  bc.beam = 5;
  for (int frames : {16, 40, 80}) {
    const Mat x = RandomMat(frames, c.d_feat, static_cast<std::uint64_t>(frames));
    const Firing f = model.Fire(model.encoder().Encode(x));
    const auto hyps = DecodeFrameSync(model, f, bc);
    ASSERT_FALSE(hyps.empty());
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      EXPECT_EQ(static_cast<int>(hyps[i].labels.size()), f.plan.fire_count());
      for (int y : hyps[i].labels) EXPECT_TRUE(c.vocab.IsLabel(y));
      if (i) EXPECT_GE(hyps[i - 1].combined, hyps[i].combined);
    }
  }
}

TEST(FrameSync, BeamOneMatchesGreedyForward) {
  const SanConfig c = TinyConfig(4);
  CifModel model(c, 12);
  model.params().Find("cif.predictor.out.weight")->value.setZero();
  model.params().Find("cif.predictor.out.bias")->value.setConstant(0.3);
  const Mat x = RandomMat(56, c.d_feat, 13);
  Graph g(false);
  const auto out = model.Forward(g, g.Constant(x), nullptr, false, nullptr);
  BeamConfig bc;
  bc.beam = 1;
  const auto hyps = DecodeFrameSync(model, model.Fire(model.encoder().Encode(x)), bc);
  ASSERT_EQ(hyps.size(), 1u);
  std::vector<int> greedy;
  for (Eigen::Index i = 0; i < out.logits.value().rows(); ++i) {
    Eigen::Index best;
    out.logits.value().row(i).head(c.vocab.n_labels).maxCoeff(&best);
    greedy.push_back(static_cast<int>(best));
  }
  EXPECT_FALSE(greedy.empty());
  EXPECT_EQ(hyps[0].labels, greedy);
}

TEST(FrameSync, WideBeamMatchesExhaustiveOverTwoFires) {
  const SanConfig c = TinyConfig(3);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CifModel model(c, seed);
    Sharpen(model.params(), "decoder.output", 2.0);
    Firing f;
    f.embeddings = RandomMat(2, c.d_model, seed + 50);
    BeamConfig bc;
    bc.beam = 9;
    const auto hyps = DecodeFrameSync(model, f, bc);
    std::vector<std::pair<double, std::vector<int>>> all;
    for (const auto &s : AllSequences(3, 2))
      if (s.size() == 2) all.emplace_back(CifSequenceScore(model, f.embeddings, s), s);
    std::stable_sort(all.begin(), all.end(), [](const auto &a, const auto &b) {
      return a.first > b.first;
    });
    ASSERT_EQ(hyps.size(), 9u);
    for (std::size_t i = 0; i < all.size(); ++i) {
      EXPECT_EQ(hyps[i].labels, all[i].second) << "rank " << i;
      EXPECT_NEAR(hyps[i].model_score, all[i].first, 1e-9);
    }
  }
}

TEST(FrameSync, ZeroFiresGivesEmptyHypothesis) {
  const SanConfig c = TinyConfig(3);
  CifModel model(c, 1);
  Firing f;
  f.embeddings = Mat(0, c.d_model);
  const auto hyps = DecodeFrameSync(model, f, BeamConfig{});
  ASSERT_EQ(hyps.size(), 1u);
  EXPECT_TRUE(hyps[0].labels.empty());
  EXPECT_EQ(hyps[0].model_score, 0.0);
}

std::vector<Hypothesis> TwoHypotheses() {
  Hypothesis a, b;
  a.labels = {1};
  a.model_score = -1.0;
  a.lm_score = -6.0;
  b.labels = {2};
  b.model_score = -2.5;
  b.lm_score = -3.0;
  return {a, b};
}

TEST(Rescore, CrossoverMatchesClosedForm) {
  // -1 - 6g == -2.5 - 3g  at  g* = 0.5.
  const double crossover = (-1.0 - -2.5) / (-3.0 - -6.0);
  EXPECT_DOUBLE_EQ(crossover, 0.5);
  for (double gamma = 0.0; gamma <= 1.0; gamma += 0.01) {
    if (std::abs(gamma - crossover) < 1e-9) continue;
    auto hyps = TwoHypotheses();
    Rescore(hyps, gamma);
    EXPECT_EQ(hyps[0].labels[0], gamma < crossover ? 1 : 2) << gamma;
    for (const Hypothesis &h : hyps)
      EXPECT_DOUBLE_EQ(h.combined, h.model_score + gamma * h.lm_score);
  }
}

TEST(Rescore, ZeroWeightIsStableAndLargeWeightFollowsLm) {
  std::vector<Hypothesis> hyps(5);
  for (int i = 0; i < 5; ++i) {
    hyps[i].labels = {i};
    hyps[i].model_score = -1.0;  // all tied
    hyps[i].lm_score = -static_cast<double>((i * 3) % 5);
  }
  auto same = hyps;
  Rescore(same, 0.0);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(same[i].labels[0], i);
  auto lm = hyps;
  Rescore(lm, 1e6);
  for (std::size_t i = 1; i < lm.size(); ++i)
    EXPECT_GE(lm[i - 1].lm_score, lm[i].lm_score);
  EXPECT_THROW(Rescore(lm, -0.1), ContractError);
}

TEST(Rescore, LmScoresComeFromLanguageModel) {
  const SanConfig c = TinyConfig(4);
  SanLm lm(c, 2);
  auto hyps = TwoHypotheses();
  LmRescore(hyps, lm, 0.3);
  for (const Hypothesis &h : hyps) {
    EXPECT_DOUBLE_EQ(h.lm_score, lm.SequenceScore(h.labels));
    EXPECT_DOUBLE_EQ(h.combined, h.model_score + 0.3 * h.lm_score);
  }
}

std::vector<Utterance> OneSecondUtterances(int n) {
  std::vector<Utterance> utts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    utts[i].id = "u" + std::to_string(i);
    utts[i].features = Mat::Zero(100, 2);
  }
  return utts;
}

TEST(Rtf, SleepStubGivesTenthRealTime) {
  const auto utts = OneSecondUtterances(4);
  int calls = 0;
  const RtfReport r = MeasureRtf(
      [&](const Utterance &) {
        ++calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      },
      utts, 1);
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(r.n_utts, 3);
  EXPECT_DOUBLE_EQ(r.audio_s, 3.0);
  EXPECT_NEAR(r.rtf, 0.1, 0.005);
  double wall = 0.0, audio = 0.0;
  for (const UtteranceTiming &t : r.per_utt) wall += t.wall_s, audio += t.audio_s;
  EXPECT_DOUBLE_EQ(r.wall_s, wall);
  EXPECT_DOUBLE_EQ(r.rtf, wall / audio);
  EXPECT_EQ(r.per_utt.front().id, "u1");
}

TEST(Rtf, EmptyCorpusRejected) {
  auto noop = [](const Utterance &) {};
  EXPECT_THROW(MeasureRtf(noop, {}, 0), ContractError);
  EXPECT_THROW(MeasureRtf(noop, OneSecondUtterances(2), 2), ContractError);
}

TEST(Output, HypothesisLinesAndRtfJson) {
  std::ostringstream os;
  auto hyps = TwoHypotheses();
  Rescore(hyps, 1.0);
  WriteHypotheses(os, "utt", hyps, 1);
  EXPECT_EQ(os.str(), "utt\t2\t-2.5\t-3\t-5.5\n");
  os.str("");
  WriteHypotheses(os, "utt", hyps, 5);
  const std::string text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);

  RtfReport r;
  r.audio_s = 2.0;
  r.wall_s = 0.5;
  r.rtf = 0.25;
  r.n_utts = 1;
  r.per_utt.push_back({"a", 2.0, 0.5});
  std::ostringstream js;
  WriteRtfJson(js, r);
  const auto j = nlohmann::json::parse(js.str());
  EXPECT_EQ(j.at("rtf").get<double>(), 0.25);
  EXPECT_EQ(j.at("n_utts").get<int>(), 1);
  EXPECT_EQ(j.at("per_utt")[0].at("id").get<std::string>(), "a");
}

}  // namespace
}  // namespace syncasr
