// syncasr/corpus.h

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

// Synthetic "symbolic phone" corpora: each label is rendered as a segment of
// frames around a per-label prototype vector, with optional crossfades at
// segment boundaries.  Also the feature/transcript/manifest file formats and
// the long, repeated and noisy stress-set generators.

#ifndef SYNCASR_CORPUS_H_
#define SYNCASR_CORPUS_H_

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "syncasr/binary-io.h"
#include "syncasr/rng.h"
#include "syncasr/tensor.h"

namespace syncasr {

struct Utterance {
  std::string id;
  std::string speaker;
  Mat features;  ///< T x d_feat, 10 ms per frame; empty when not loaded
  std::vector<int> labels;
};

/// Seconds of audio represented by one feature frame.
inline constexpr double kFrameShift = 0.010;

struct CorpusSpec {
  int n_labels = 16;
  int d_feat = 20;
  int min_labels = 3;
  int max_labels = 8;
  int min_frames = 10;  ///< frames per label segment
  int max_frames = 16;
  /// Fraction of each segment that crossfades with its neighbours, split
  /// between the two ends.
  double blur = 0.0;
  double noise_std = 0.1;
  int speakers = 10;
  double speaker_offset_std = 0.2;
  /// Probability that the next label is drawn from the current label's three
  /// preferred successors rather than uniformly (0 gives no structure).
  double grammar_strength = 0.0;
  std::uint64_t seed = 1;

  /// Throws ContractError naming the offending field.
  void Validate() const;
};

/// The fixed prototype of every label, [n_labels x d_feat].
Mat LabelPrototypes(const CorpusSpec &spec);
/// Preferred successors of each label under the bigram grammar.
std::vector<std::vector<int>> GrammarSuccessors(const CorpusSpec &spec);

/// Renders utterances `prefix-00000` ... deterministically from
/// (spec.seed, prefix, index).  Adjacent labels always differ.
std::vector<Utterance> GenerateCorpus(const CorpusSpec &spec, int n_utts,
                                      const std::string &prefix);

// ---------------------------------------------------------------------------
// Files.

inline constexpr char kFeatureMagic[8] = {'S', 'Y', 'N', '2',
                                          'F', 'E', 'A', 'T'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr int kMinFrames = 8;

/// Little-endian: magic, version u32, T u32, d_feat u32, T*d_feat f64.
void WriteFeatures(const std::string &path, const Mat &features);
/// Throws FormatError (with byte position) on bad magic/version, truncation
/// or T < 8.
Mat ReadFeatures(const std::string &path);

/// `utt_id<TAB>speaker<TAB>space-separated labels`, one line per utterance.
void WriteTranscripts(const std::string &path,
                      const std::vector<Utterance> &utts);
std::vector<Utterance> ReadTranscripts(const std::string &path);

/// Writes <dir>/<split>/features/<id>.feat, <dir>/<split>/transcripts.tsv and
/// the manifest <dir>/<split>.manifest (`utt_id<TAB>feature<TAB>transcripts`,
/// paths relative to the manifest's directory).  Returns the manifest path.
std::string WriteSplit(const std::string &dir, const std::string &split,
                       const std::vector<Utterance> &utts);
/// Loads a manifest; features are read only when `with_features` is true.
std::vector<Utterance> LoadManifest(const std::string &path,
                                    bool with_features = true);

// ---------------------------------------------------------------------------
// Stress sets.

/// Features and transcript tiled n times; id gets a "-xN" suffix for n > 1.
Utterance RepeatUtterance(const Utterance &u, int n);

struct DurationBucket {
  int min_frames;  ///< inclusive
  int max_frames;  ///< exclusive
};

struct LongUtterance {
  Utterance utt;
  int bucket = 0;
  std::vector<std::string> pieces;  ///< source utterance ids in order
};

struct LongSet {
  std::vector<LongUtterance> utts;
  std::vector<std::string> warnings;
};

/// Concatenates random same-speaker utterances until each bucket holds
/// `per_bucket` utterances with total length inside the bucket.  Speakers
/// with a single utterance are skipped with a warning.  Output is ordered by
/// bucket.
LongSet ConcatLong(const std::vector<Utterance> &utts,
                   const std::vector<DurationBucket> &buckets, int per_bucket,
                   std::uint64_t seed);

enum class NoiseType { kWhite, kDrift, kBabble };
NoiseType ParseNoiseType(const std::string &name);
std::string NoiseTypeName(NoiseType t);

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Adds noise scaled so 10 log10(P_signal / P_noise) equals snr_db, power
/// measured as the mean square over the whole utterance.  snr_db == kNoNoise
/// returns the input unchanged; zero signal power throws ContractError.
Utterance MixNoise(const Utterance &u, double snr_db, NoiseType type,
                   std::uint64_t seed);

/// 10 log10(P_signal / P_(noisy - signal)).
double MeasureSnr(const Mat &clean, const Mat &noisy);

}  // namespace syncasr

#endif  // SYNCASR_CORPUS_H_
