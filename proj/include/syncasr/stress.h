// syncasr/stress.h

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

// Stress sweeps: decode every model on a series of conditions (repetition
// count, duration bucket, noise level) and tabulate errors and timing.

#ifndef SYNCASR_STRESS_H_
#define SYNCASR_STRESS_H_

#include <string>
#include <vector>

#include "syncasr/corpus.h"
#include "syncasr/decode.h"
#include "syncasr/metrics.h"

namespace syncasr {

struct StressCondition {
  std::vector<std::string> keys;  ///< one value per condition column
  std::vector<Utterance> utts;
};

struct NamedDecoder {
  std::string name;
  UtteranceDecoder decode;
};

/// A seeded subset of ceil(fraction * size) utterances, in corpus order.
std::vector<Utterance> SampleSubset(const std::vector<Utterance> &utts,
                                    double fraction, std::uint64_t seed);

/// n = 1 .. max_n tilings of `utts`; condition column "n".
std::vector<StressCondition> RepeatConditions(const std::vector<Utterance> &utts,
                                              int max_n);
/// Buckets [f_i * mean, f_(i+1) * mean) frames for consecutive factors;
/// condition columns "bucket", "min_frames", "max_frames".
std::vector<StressCondition> LongConditions(const std::vector<Utterance> &utts,
                                            const std::vector<double> &factors,
                                            double mean_frames, int per_bucket,
                                            std::uint64_t seed,
                                            std::vector<std::string> *warnings);
/// A clean condition followed by every (type, snr) pair; condition columns
/// "noise", "snr_db".
std::vector<StressCondition> NoiseConditions(const std::vector<Utterance> &utts,
                                             const std::vector<NoiseType> &types,
                                             const std::vector<double> &snrs,
                                             std::uint64_t seed);

/// Decodes every condition with every model (models outermost) and returns
/// one row per (model, condition): keys {model, condition keys...}, pooled
/// 1-best error counts, and values {wall_s, time_ratio, rtf} where time_ratio
/// is relative to the model's first condition.  A decode failure throws
/// std::runtime_error naming model and condition.
ReportTable RunStress(const std::string &name,
                      const std::vector<std::string> &condition_columns,
                      const std::vector<StressCondition> &conditions,
                      const std::vector<NamedDecoder> &models);

}  // namespace syncasr

#endif  // SYNCASR_STRESS_H_
