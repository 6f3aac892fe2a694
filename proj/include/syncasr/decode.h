// syncasr/decode.h

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

// Label-synchronous beam search for the transformer, frame-synchronous beam
// search over CIF firings, n-best rescoring with the SAN language model and
// real-time-factor measurement.

#ifndef SYNCASR_DECODE_H_
#define SYNCASR_DECODE_H_

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "syncasr/cif.h"
#include "syncasr/corpus.h"
#include "syncasr/san.h"

namespace syncasr {

struct Hypothesis {
  std::vector<int> labels;  ///< surface form, never contains end-of-sentence
  double model_score = 0.0;
  double lm_score = 0.0;
  double combined = 0.0;
  /// Set when search hit max_len before any hypothesis ended.
  bool truncated = false;
};

struct BeamConfig {
  int beam = 10;
  /// Maximum decoder steps (labels plus end-of-sentence) for the
  /// label-synchronous search; 0 selects 1.2 * U + 10.
  int max_len = 0;
  /// Rank completed transformer hypotheses by score / (steps) instead of the
  /// raw sum of log-probabilities.
  bool length_normalize = false;

  void Validate() const;
};

/// Default length bound for U encoder steps.
int DefaultMaxLen(int encoder_steps);

/// Best-first beam search over labels plus end-of-sentence.  Candidates that
/// end the sentence move to a completed pool; search stops once the pool holds
/// `beam` entries none of the live hypotheses can beat, when nothing is left
/// alive, or after max_len steps.  Returns the pool sorted by score, or the
/// best live hypothesis flagged truncated when the pool is empty.
std::vector<Hypothesis> BeamSearchLabelSync(const TransformerModel &model,
                                            const EncodedSequence &enc,
                                            const BeamConfig &config);

/// Beam search with one step per fired embedding over real labels only.  All
/// hypotheses have exactly fire-count labels; zero fires yields one empty
/// hypothesis.
std::vector<Hypothesis> DecodeFrameSync(const CifModel &model,
                                        const Firing &firing,
                                        const BeamConfig &config);

/// combined = model + gamma * lm with the stored lm scores; stable sort by
/// combined, best first.  gamma < 0 throws ContractError.
void Rescore(std::vector<Hypothesis> &hyps, double gamma);
/// Fills lm_score from `lm` then calls Rescore.
void LmRescore(std::vector<Hypothesis> &hyps, const SanLm &lm, double gamma);

/// Full decode of one utterance (encoder, search, optional rescoring).
using UtteranceDecoder =
    std::function<std::vector<Hypothesis>(const Mat &features)>;

UtteranceDecoder MakeTransformerDecoder(const TransformerModel &model,
                                        const BeamConfig &config,
                                        const SanLm *lm = nullptr,
                                        double gamma = 0.0);
UtteranceDecoder MakeCifDecoder(const CifModel &model, const BeamConfig &config,
                                const SanLm *lm = nullptr, double gamma = 0.0);

struct UtteranceTiming {
  std::string id;
  double audio_s = 0.0;
  double wall_s = 0.0;
};

struct RtfReport {
  double audio_s = 0.0;
  double wall_s = 0.0;
  double rtf = 0.0;
  int n_utts = 0;
  std::vector<UtteranceTiming> per_utt;
};

/// Times `decode` on every utterance with a monotonic clock; the first
/// `warmup` utterances run but are excluded from the report.  Throws
/// ContractError when no utterance remains to be timed.
RtfReport MeasureRtf(
    const std::function<void(const Utterance &)> &decode,
    const std::vector<Utterance> &utts, int warmup);

/// `utt_id<TAB>labels<TAB>model<TAB>lm<TAB>combined`, up to `nbest` lines.
void WriteHypotheses(std::ostream &os, const std::string &utt_id,
                     const std::vector<Hypothesis> &hyps, int nbest);
/// One JSON object with audio_s, wall_s, rtf, n_utts and per_utt.
void WriteRtfJson(std::ostream &os, const RtfReport &report);

}  // namespace syncasr

#endif  // SYNCASR_DECODE_H_
