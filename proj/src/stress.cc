// syncasr/stress.cc

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

#include "syncasr/stress.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace syncasr {

std::vector<Utterance> SampleSubset(const std::vector<Utterance> &utts,
                                    double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ContractError("subset fraction must be in (0, 1]");
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(utts.size())));
  std::vector<std::size_t> order(utts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(seed).Derive("stress").Derive("subset");
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(
                  rng.UniformInt(0, static_cast<int>(i) - 1))]);
  order.resize(k);
  std::sort(order.begin(), order.end());
  std::vector<Utterance> out;
  for (std::size_t i : order) out.push_back(utts[i]);
  return out;
}

std::vector<StressCondition> RepeatConditions(const std::vector<Utterance> &utts,
                                              int max_n) {
  if (max_n < 1) throw ContractError("max repetition must be >= 1");
  std::vector<StressCondition> out;
  for (int n = 1; n <= max_n; ++n) {
    StressCondition c;
    c.keys = {std::to_string(n)};
    for (const Utterance &u : utts) c.utts.push_back(RepeatUtterance(u, n));
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<StressCondition> LongConditions(const std::vector<Utterance> &utts,
                                            const std::vector<double> &factors,
                                            double mean_frames, int per_bucket,
                                            std::uint64_t seed,
                                            std::vector<std::string> *warnings) {
  if (factors.size() < 2)
    throw ContractError("long mode needs at least two bucket factors");
  if (!(mean_frames > 0.0)) throw ContractError("mean length must be positive");
  std::vector<DurationBucket> buckets;
  for (std::size_t i = 0; i + 1 < factors.size(); ++i) {
    if (!(factors[i + 1] > factors[i]))
      throw ContractError("bucket factors must increase");
    buckets.push_back(
        {static_cast<int>(std::lround(factors[i] * mean_frames)),
         static_cast<int>(std::lround(factors[i + 1] * mean_frames))});
  }
  LongSet set = ConcatLong(utts, buckets, per_bucket, seed);
  if (warnings != nullptr) *warnings = set.warnings;
  std::vector<StressCondition> out(buckets.size());
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    char label[64];
    std::snprintf(label, sizeof(label), "%gx-%gx", factors[b], factors[b + 1]);
    out[b].keys = {label, std::to_string(buckets[b].min_frames),
                   std::to_string(buckets[b].max_frames)};
  }
  for (LongUtterance &lu : set.utts)
    out[static_cast<std::size_t>(lu.bucket)].utts.push_back(std::move(lu.utt));
  return out;
}

std::vector<StressCondition> NoiseConditions(const std::vector<Utterance> &utts,
                                             const std::vector<NoiseType> &types,
                                             const std::vector<double> &snrs,
                                             std::uint64_t seed) {
  std::vector<StressCondition> out;
  out.push_back({{"clean", "inf"}, utts});
  for (NoiseType t : types)
    for (double snr : snrs) {
      if (!(snr >= 0.0 && snr <= 20.0))
        throw ContractError("SNR " + std::to_string(snr) +
                            " dB outside [0, 20]");
      char label[32];
      std::snprintf(label, sizeof(label), "%g", snr);
      StressCondition c;
      c.keys = {NoiseTypeName(t), label};
      for (const Utterance &u : utts) c.utts.push_back(MixNoise(u, snr, t, seed));
      out.push_back(std::move(c));
    }
  return out;
}

ReportTable RunStress(const std::string &name,
                      const std::vector<std::string> &condition_columns,
                      const std::vector<StressCondition> &conditions,
                      const std::vector<NamedDecoder> &models) {
  using Clock = std::chrono::steady_clock;
  ReportTable table;
  table.name = name;
  table.key_columns = {"model"};
  table.key_columns.insert(table.key_columns.end(), condition_columns.begin(),
                           condition_columns.end());
  table.value_columns = {"wall_s", "time_ratio", "rtf"};
  for (const NamedDecoder &model : models) {
    double first_wall = 0.0;
    for (std::size_t c = 0; c < conditions.size(); ++c) {
      const StressCondition &cond = conditions[c];
      std::string where = model.name;
      for (const std::string &k : cond.keys) where += " " + k;
      std::vector<ReferenceEntry> refs;
      std::map<std::string, std::vector<int>> hyps;
      double wall = 0.0, audio = 0.0;
      for (const Utterance &u : cond.utts) {
        std::vector<Hypothesis> out;
        const auto start = Clock::now();
        try {
          out = model.decode(u.features);
        } catch (const std::exception &e) {
          throw std::runtime_error("decoding failed for " + where +
                                   " (utterance " + u.id + "): " + e.what());
        }
        wall += std::chrono::duration<double>(Clock::now() - start).count();
        audio += static_cast<double>(u.features.rows()) * kFrameShift;
        refs.push_back({u.id, u.labels, ""});
        hyps[u.id] = out.empty() ? std::vector<int>{} : out.front().labels;
      }
      if (c == 0) first_wall = wall;
      ReportTable::Row row;
      row.keys = {model.name};
      row.keys.insert(row.keys.end(), cond.keys.begin(), cond.keys.end());
      row.counts = ScoreCorpus(refs, hyps).total;
      row.values = {wall, first_wall > 0.0 ? wall / first_wall : 0.0,
                    audio > 0.0 ? wall / audio : 0.0};
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace syncasr
