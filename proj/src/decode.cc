// syncasr/decode.cc

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

#include "syncasr/decode.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace syncasr {

void BeamConfig::Validate() const {
  if (beam < 1) throw ContractError("BeamConfig.beam: must be >= 1");
  if (max_len < 0) throw ContractError("BeamConfig.max_len: must be >= 0");
}

int DefaultMaxLen(int encoder_steps) {
  return static_cast<int>(std::ceil(1.2 * encoder_steps)) + 10;
}

namespace {

struct Live {
  std::vector<int> labels;
  double score = 0.0;
  DecoderCache cache;
};

struct Candidate {
  double score;
  int parent;
  int label;
};

// Best first; equal scores keep generation order (parent, then label).
void SortCandidates(std::vector<Candidate> &c) {
  std::stable_sort(c.begin(), c.end(),
                   [](const Candidate &a, const Candidate &b) {
                     return a.score > b.score;
                   });
}

void SortHypotheses(std::vector<Hypothesis> &hyps,
                    double (*key)(const Hypothesis &)) {
  std::stable_sort(hyps.begin(), hyps.end(),
                   [key](const Hypothesis &a, const Hypothesis &b) {
                     return key(a) > key(b);
                   });
}

double ByCombined(const Hypothesis &h) { return h.combined; }
double ByLengthNormalized(const Hypothesis &h) {
  return h.combined / static_cast<double>(h.labels.size() + 1);
}

}  // namespace

std::vector<Hypothesis> BeamSearchLabelSync(const TransformerModel &model,
                                            const EncodedSequence &enc,
                                            const BeamConfig &config) {
  config.Validate();
  const Vocab &vocab = model.config().vocab;
  const int max_len = config.max_len > 0
                          ? config.max_len
                          : DefaultMaxLen(static_cast<int>(enc.h.rows()));
  std::vector<Live> live(1);
  live[0].cache = model.StartDecoding(enc);
  std::vector<Hypothesis> pool;
  // Candidate symbols: real labels, then end-of-sentence.
  std::vector<int> symbols;
  for (int y = 0; y < vocab.n_labels; ++y) symbols.push_back(y);
  symbols.push_back(vocab.eos());

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t p = 0; p < live.size(); ++p) {
      const RowVec logp =
          LogSoftmax(model.DecoderStep(live[p].labels, live[p].cache));
      for (int y : symbols)
        cands.push_back({live[p].score + logp(y), static_cast<int>(p), y});
    }
    SortCandidates(cands);
    if (static_cast<int>(cands.size()) > config.beam) cands.resize(config.beam);
    std::vector<Live> next;
    for (const Candidate &c : cands) {
      const Live &parent = live[static_cast<std::size_t>(c.parent)];
      if (c.label == vocab.eos()) {
        Hypothesis h;
        h.labels = parent.labels;
        h.model_score = h.combined = c.score;
        pool.push_back(std::move(h));
      } else {
        Live l{parent.labels, c.score, parent.cache};
        l.labels.push_back(c.label);
        next.push_back(std::move(l));
      }
    }
    live = std::move(next);
    if (static_cast<int>(pool.size()) >= config.beam && !live.empty()) {
      std::vector<double> scores;
      for (const Hypothesis &h : pool) scores.push_back(h.combined);
      std::nth_element(scores.begin(), scores.begin() + (config.beam - 1),
                       scores.end(), std::greater<double>());
      // Extensions only lower a raw score.
      if (live.front().score <= scores[static_cast<std::size_t>(config.beam - 1)])
        break;
    }
  }

  if (pool.empty()) {
    Hypothesis h;
    h.labels = live.front().labels;
    h.model_score = h.combined = live.front().score;
    h.truncated = true;
    return {h};
  }
  SortHypotheses(pool, config.length_normalize ? ByLengthNormalized : ByCombined);
  if (static_cast<int>(pool.size()) > config.beam) pool.resize(config.beam);
  return pool;
}

std::vector<Hypothesis> DecodeFrameSync(const CifModel &model,
                                        const Firing &firing,
                                        const BeamConfig &config) {
  config.Validate();
  const int n_labels = model.config().vocab.n_labels;
  struct CifLive {
    std::vector<int> labels;
    double score = 0.0;
    CifDecoderCache cache;
  };
  std::vector<CifLive> live(1);
  live[0].cache = model.StartDecoding();
  for (Eigen::Index i = 0; i < firing.embeddings.rows(); ++i) {
    const RowVec c = firing.embeddings.row(i);
    std::vector<Candidate> cands;
    for (std::size_t p = 0; p < live.size(); ++p) {
      const RowVec logp =
          LogSoftmax(model.DecoderStep(live[p].labels, c, live[p].cache));
      for (int y = 0; y < n_labels; ++y)
        cands.push_back({live[p].score + logp(y), static_cast<int>(p), y});
    }
    SortCandidates(cands);
    if (static_cast<int>(cands.size()) > config.beam) cands.resize(config.beam);
    std::vector<CifLive> next;
    for (const Candidate &cand : cands) {
      const CifLive &parent = live[static_cast<std::size_t>(cand.parent)];
      CifLive l{parent.labels, cand.score, parent.cache};
      l.labels.push_back(cand.label);
      next.push_back(std::move(l));
    }
    live = std::move(next);
  }
  std::vector<Hypothesis> out;
  for (CifLive &l : live) {
    Hypothesis h;
    h.labels = std::move(l.labels);
    h.model_score = h.combined = l.score;
    out.push_back(std::move(h));
  }
  return out;
}

void Rescore(std::vector<Hypothesis> &hyps, double gamma) {
  if (!(gamma >= 0.0))
    throw ContractError("LM weight must be >= 0, got " + std::to_string(gamma));
  for (Hypothesis &h : hyps) h.combined = h.model_score + gamma * h.lm_score;
  SortHypotheses(hyps, ByCombined);
}

void LmRescore(std::vector<Hypothesis> &hyps, const SanLm &lm, double gamma) {
  for (Hypothesis &h : hyps) h.lm_score = lm.SequenceScore(h.labels);
  Rescore(hyps, gamma);
}

UtteranceDecoder MakeTransformerDecoder(const TransformerModel &model,
                                        const BeamConfig &config,
                                        const SanLm *lm, double gamma) {
  return [&model, config, lm, gamma](const Mat &features) {
    auto hyps =
        BeamSearchLabelSync(model, model.encoder().Encode(features), config);
    if (lm != nullptr) LmRescore(hyps, *lm, gamma);
    return hyps;
  };
}

UtteranceDecoder MakeCifDecoder(const CifModel &model, const BeamConfig &config,
                                const SanLm *lm, double gamma) {
  return [&model, config, lm, gamma](const Mat &features) {
    auto hyps = DecodeFrameSync(
        model, model.Fire(model.encoder().Encode(features)), config);
    if (lm != nullptr) LmRescore(hyps, *lm, gamma);
    return hyps;
  };
}

RtfReport MeasureRtf(const std::function<void(const Utterance &)> &decode,
                     const std::vector<Utterance> &utts, int warmup) {
  if (warmup < 0) throw ContractError("warmup must be >= 0");
  if (static_cast<std::size_t>(warmup) >= utts.size())
    throw ContractError("no utterances left to time (" +
                        std::to_string(utts.size()) + " utterances, warmup " +
                        std::to_string(warmup) + ")");
  using Clock = std::chrono::steady_clock;
  RtfReport r;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const auto start = Clock::now();
    decode(utts[i]);
    const auto stop = Clock::now();
    if (static_cast<int>(i) < warmup) continue;
    UtteranceTiming t;
    t.id = utts[i].id;
    t.audio_s = static_cast<double>(utts[i].features.rows()) * kFrameShift;
    t.wall_s = std::chrono::duration<double>(stop - start).count();
    r.audio_s += t.audio_s;
    r.wall_s += t.wall_s;
    r.per_utt.push_back(std::move(t));
  }
  r.n_utts = static_cast<int>(r.per_utt.size());
  if (!(r.audio_s > 0.0)) throw ContractError("timed utterances have no audio");
  r.rtf = r.wall_s / r.audio_s;
  return r;
}

void WriteHypotheses(std::ostream &os, const std::string &utt_id,
                     const std::vector<Hypothesis> &hyps, int nbest) {
  char buf[96];
  for (std::size_t i = 0; i < hyps.size() && static_cast<int>(i) < nbest; ++i) {
    const Hypothesis &h = hyps[i];
    os << utt_id << '\t';
    for (std::size_t k = 0; k < h.labels.size(); ++k)
      os << (k ? " " : "") << h.labels[k];
    std::snprintf(buf, sizeof(buf), "\t%.10g\t%.10g\t%.10g\n", h.model_score,
                  h.lm_score, h.combined);
    os << buf;
  }
}

void WriteRtfJson(std::ostream &os, const RtfReport &report) {
  nlohmann::ordered_json j;
  j["audio_s"] = report.audio_s;
  j["wall_s"] = report.wall_s;
  j["rtf"] = report.rtf;
  j["n_utts"] = report.n_utts;
  j["per_utt"] = nlohmann::ordered_json::array();
  for (const UtteranceTiming &t : report.per_utt)
    j["per_utt"].push_back(
        {{"id", t.id}, {"audio_s", t.audio_s}, {"wall_s", t.wall_s}});
  os << j.dump(2) << '\n';
}

}  // namespace syncasr
