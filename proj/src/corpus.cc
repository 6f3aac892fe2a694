// syncasr/corpus.cc

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

#include "syncasr/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace syncasr {

namespace fs = std::filesystem;

void CorpusSpec::Validate() const {
  auto fail = [](const std::string &field, const std::string &why) {
    throw ContractError("CorpusSpec." + field + ": " + why);
  };
  if (n_labels < 2) fail("n_labels", "must be >= 2");
  if (d_feat < 1) fail("d_feat", "must be >= 1");
  if (min_labels < 1) fail("min_labels", "must be >= 1");
  if (max_labels < min_labels) fail("max_labels", "must be >= min_labels");
  if (min_frames < 1) fail("min_frames", "must be >= 1");
  if (max_frames < min_frames) fail("max_frames", "must be >= min_frames");
  if (min_labels * min_frames < kMinFrames)
    fail("min_frames", "shortest utterance would have fewer than 8 frames");
  if (blur < 0.0 || blur > 1.0) fail("blur", "must be in [0, 1]");
  if (noise_std < 0.0) fail("noise_std", "must be >= 0");
  if (speakers < 1) fail("speakers", "must be >= 1");
  if (speaker_offset_std < 0.0) fail("speaker_offset_std", "must be >= 0");
  if (grammar_strength < 0.0 || grammar_strength > 1.0)
    fail("grammar_strength", "must be in [0, 1]");
}

Mat LabelPrototypes(const CorpusSpec &spec) {
  Rng rng = Rng(spec.seed).Derive("corpus").Derive("prototypes");
  Mat p(spec.n_labels, spec.d_feat);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.Normal();
  return p;
}

std::vector<std::vector<int>> GrammarSuccessors(const CorpusSpec &spec) {
  Rng rng = Rng(spec.seed).Derive("corpus").Derive("grammar");
  std::vector<std::vector<int>> out(static_cast<std::size_t>(spec.n_labels));
  const int k = std::min(3, spec.n_labels - 1);
  for (int y = 0; y < spec.n_labels; ++y) {
    std::vector<int> others;
    for (int z = 0; z < spec.n_labels; ++z)
      if (z != y) others.push_back(z);
    for (int i = 0; i < k; ++i) {
      const int j = rng.UniformInt(i, static_cast<int>(others.size()) - 1);
      std::swap(others[static_cast<std::size_t>(i)],
                others[static_cast<std::size_t>(j)]);
      out[static_cast<std::size_t>(y)].push_back(others[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

namespace {

std::string Padded(const std::string &prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-%05d", i);
  return prefix + buf;
}

std::string SpeakerName(int s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spk%03d", s);
  return buf;
}

}  // namespace

std::vector<Utterance> GenerateCorpus(const CorpusSpec &spec, int n_utts,
                                      const std::string &prefix) {
  spec.Validate();
  if (n_utts < 0) throw ContractError("utterance count must be >= 0");
  const Mat protos = LabelPrototypes(spec);
  const auto successors = GrammarSuccessors(spec);
  const Rng corpus_rng = Rng(spec.seed).Derive("corpus");
  std::vector<Mat> offsets;
  for (int s = 0; s < spec.speakers; ++s) {
    Rng rng = corpus_rng.Derive("speaker", static_cast<std::uint64_t>(s));
    Mat o(1, spec.d_feat);
    for (Eigen::Index i = 0; i < o.size(); ++i)
      o.data()[i] = spec.speaker_offset_std * rng.Normal();
    offsets.push_back(o);
  }

  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(n_utts));
  for (int n = 0; n < n_utts; ++n) {
    Rng rng = corpus_rng.Derive(prefix, static_cast<std::uint64_t>(n));
    Utterance u;
    u.id = Padded(prefix, n);
    const int spk = rng.UniformInt(0, spec.speakers - 1);
    u.speaker = SpeakerName(spk);
    const int s = rng.UniformInt(spec.min_labels, spec.max_labels);
    for (int i = 0; i < s; ++i) {
      int y;
      if (i > 0 && rng.Uniform() < spec.grammar_strength) {
        const auto &next = successors[static_cast<std::size_t>(u.labels.back())];
        y = next[static_cast<std::size_t>(
            rng.UniformInt(0, static_cast<int>(next.size()) - 1))];
      } else if (i > 0) {
        // Uniform over labels other than the previous one.
        y = rng.UniformInt(0, spec.n_labels - 2);
        if (y >= u.labels.back()) ++y;
      } else {
        y = rng.UniformInt(0, spec.n_labels - 1);
      }
      u.labels.push_back(y);
    }
    std::vector<int> lengths;
    int total = 0;
    for (int i = 0; i < s; ++i) {
      lengths.push_back(rng.UniformInt(spec.min_frames, spec.max_frames));
      total += lengths.back();
    }
    u.features.resize(total, spec.d_feat);
    int t = 0;
    for (int i = 0; i < s; ++i) {
      const int len = lengths[static_cast<std::size_t>(i)];
      const double zone = 0.5 * spec.blur * len;
      const auto self = protos.row(u.labels[static_cast<std::size_t>(i)]);
      for (int p = 0; p < len; ++p, ++t) {
        RowVec frame = self;
        const double from_start = p + 0.5, from_end = len - p - 0.5;
        if (i > 0 && from_start < zone) {
          const double w = 0.5 * (1.0 - from_start / zone);
          frame = (1.0 - w) * frame +
                  w * protos.row(u.labels[static_cast<std::size_t>(i - 1)]);
        } else if (i + 1 < s && from_end < zone) {
          const double w = 0.5 * (1.0 - from_end / zone);
          frame = (1.0 - w) * frame +
                  w * protos.row(u.labels[static_cast<std::size_t>(i + 1)]);
        }
        frame += offsets[static_cast<std::size_t>(spk)];
        for (Eigen::Index d = 0; d < frame.size(); ++d)
          frame(d) += spec.noise_std * rng.Normal();
        u.features.row(t) = frame;
      }
    }
    out.push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------

void WriteFeatures(const std::string &path, const Mat &features) {
  if (features.rows() < kMinFrames)
    throw ContractError("feature matrix " + ShapeString(features) +
                        " has fewer than 8 frames");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kFeatureMagic, sizeof(kFeatureMagic));
  WriteU32(os, kFeatureVersion);
  WriteU32(os, static_cast<std::uint32_t>(features.rows()));
  WriteU32(os, static_cast<std::uint32_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.size(); ++i)
    WriteF64(os, features.data()[i]);
  if (!os) throw std::runtime_error("write failed for " + path);
}

Mat ReadFeatures(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  ByteReader in(is, path);
  char magic[sizeof(kFeatureMagic)];
  in.Read(magic, sizeof(magic));
  for (std::size_t i = 0; i < sizeof(magic); ++i)
    if (magic[i] != kFeatureMagic[i])
      throw FormatError(path + ": bad feature magic at byte " +
                        std::to_string(i));
  const std::uint32_t version = in.U32();
  if (version != kFeatureVersion)
    throw FormatError(path + ": unsupported feature version " +
                      std::to_string(version) + " at byte 8");
  const std::uint32_t frames = in.U32();
  const std::uint32_t dims = in.U32();
  if (frames < static_cast<std::uint32_t>(kMinFrames))
    throw FormatError(path + ": " + std::to_string(frames) +
                      " frames at byte 12, at least 8 required");
  if (dims < 1) throw FormatError(path + ": zero feature dimension at byte 16");
  Mat m(frames, dims);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = in.F64();
  if (!in.AtEnd())
    throw FormatError(path + ": trailing bytes after position " +
                      std::to_string(in.position()));
  return m;
}

void WriteTranscripts(const std::string &path,
                      const std::vector<Utterance> &utts) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  for (const Utterance &u : utts) {
    os << u.id << '\t' << u.speaker << '\t';
    for (std::size_t i = 0; i < u.labels.size(); ++i)
      os << (i ? " " : "") << u.labels[i];
    os << '\n';
  }
}

std::vector<Utterance> ReadTranscripts(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<Utterance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError(path + ": line " + std::to_string(lineno) +
                        " needs three tab-separated fields");
    Utterance u;
    u.id = line.substr(0, t1);
    u.speaker = line.substr(t1 + 1, t2 - t1 - 1);
    std::istringstream labels(line.substr(t2 + 1));
    std::string tok;
    while (labels >> tok) {
      std::size_t used = 0;
      int y = -1;
      try {
        y = std::stoi(tok, &used);
      } catch (const std::exception &) {
        used = 0;
      }
      if (used != tok.size() || y < 0)
        throw FormatError(path + ": line " + std::to_string(lineno) +
                          ": bad label '" + tok + "'");
      u.labels.push_back(y);
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::string WriteSplit(const std::string &dir, const std::string &split,
                       const std::vector<Utterance> &utts) {
  const fs::path root(dir);
  fs::create_directories(root / split / "features");
  const std::string transcripts = (fs::path(split) / "transcripts.tsv").string();
  WriteTranscripts((root / transcripts).string(), utts);
  const fs::path manifest = root / (split + ".manifest");
  std::ofstream os(manifest, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + manifest.string());
  for (const Utterance &u : utts) {
    const std::string feat =
        (fs::path(split) / "features" / (u.id + ".feat")).string();
    WriteFeatures((root / feat).string(), u.features);
    os << u.id << '\t' << feat << '\t' << transcripts << '\n';
  }
  return manifest.string();
}

std::vector<Utterance> LoadManifest(const std::string &path,
                                    bool with_features) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::map<std::string, std::map<std::string, Utterance>> transcripts;
  std::vector<Utterance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, feat, text;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, feat, '\t') ||
        !std::getline(fields, text))
      throw FormatError(path + ": line " + std::to_string(lineno) +
                        " needs utt_id, feature path and transcript path");
    const std::string text_path = (base / text).string();
    auto it = transcripts.find(text_path);
    if (it == transcripts.end()) {
      std::map<std::string, Utterance> by_id;
      for (Utterance &u : ReadTranscripts(text_path)) by_id[u.id] = std::move(u);
      it = transcripts.emplace(text_path, std::move(by_id)).first;
    }
    auto found = it->second.find(id);
    if (found == it->second.end())
      throw FormatError(path + ": utterance " + id + " missing from " +
                        text_path);
    Utterance u = found->second;
    if (with_features) u.features = ReadFeatures((base / feat).string());
    out.push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------

Utterance RepeatUtterance(const Utterance &u, int n) {
  if (n < 1) throw ContractError("repeat count must be >= 1");
  if (n == 1) return u;
  Utterance r;
  r.id = u.id + "-x" + std::to_string(n);
  r.speaker = u.speaker;
  r.features.resize(u.features.rows() * n, u.features.cols());
  for (int i = 0; i < n; ++i) {
    r.features.middleRows(i * u.features.rows(), u.features.rows()) =
        u.features;
    r.labels.insert(r.labels.end(), u.labels.begin(), u.labels.end());
  }
  return r;
}

LongSet ConcatLong(const std::vector<Utterance> &utts,
                   const std::vector<DurationBucket> &buckets, int per_bucket,
                   std::uint64_t seed) {
  LongSet out;
  std::map<std::string, std::vector<int>> by_speaker;
  for (std::size_t i = 0; i < utts.size(); ++i)
    by_speaker[utts[i].speaker].push_back(static_cast<int>(i));
  std::vector<std::string> speakers;
  for (const auto &[spk, idx] : by_speaker) {
    if (idx.size() < 2)
      out.warnings.push_back("speaker " + spk +
                             " has a single utterance; skipped");
    else
      speakers.push_back(spk);
  }
  if (speakers.empty())
    throw ContractError("no speaker has two or more utterances");

  const Rng master = Rng(seed).Derive("long");
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    const DurationBucket &bucket = buckets[b];
    if (bucket.max_frames <= bucket.min_frames)
      throw ContractError("duration bucket " + std::to_string(b) +
                          " is empty");
    Rng rng = master.Derive("bucket", b);
    int made = 0, attempts = 0;
    while (made < per_bucket) {
      if (++attempts > 1000 * std::max(per_bucket, 1))
        throw ContractError("duration bucket " + std::to_string(b) + " [" +
                            std::to_string(bucket.min_frames) + ", " +
                            std::to_string(bucket.max_frames) +
                            ") is unreachable from the available utterances");
      const std::string &spk = speakers[static_cast<std::size_t>(
          rng.UniformInt(0, static_cast<int>(speakers.size()) - 1))];
      const std::vector<int> &pool = by_speaker[spk];
      const int target = rng.UniformInt(bucket.min_frames, bucket.max_frames - 1);
      std::vector<int> pieces;
      Eigen::Index total = 0;
      int prev = -1;
      while (total < target) {
        int pick = pool[static_cast<std::size_t>(
            rng.UniformInt(0, static_cast<int>(pool.size()) - 1))];
        if (pick == prev)
          pick = pool[(std::find(pool.begin(), pool.end(), pick) - pool.begin() +
                       1) % pool.size()];
        pieces.push_back(pick);
        total += utts[static_cast<std::size_t>(pick)].features.rows();
        prev = pick;
      }
      if (pieces.size() < 2 || total >= bucket.max_frames) continue;
      LongUtterance lu;
      lu.bucket = static_cast<int>(b);
      lu.utt.id = "long-b" + std::to_string(b) + Padded("", made);
      lu.utt.speaker = spk;
      lu.utt.features.resize(total, utts[pieces[0]].features.cols());
      Eigen::Index t = 0;
      for (int p : pieces) {
        const Utterance &src = utts[static_cast<std::size_t>(p)];
        lu.utt.features.middleRows(t, src.features.rows()) = src.features;
        t += src.features.rows();
        lu.utt.labels.insert(lu.utt.labels.end(), src.labels.begin(),
                             src.labels.end());
        lu.pieces.push_back(src.id);
      }
      out.utts.push_back(std::move(lu));
      ++made;
    }
  }
  return out;
}

NoiseType ParseNoiseType(const std::string &name) {
  if (name == "white") return NoiseType::kWhite;
  if (name == "drift") return NoiseType::kDrift;
  if (name == "babble") return NoiseType::kBabble;
  throw ContractError("unknown noise type '" + name +
                      "' (expected white, drift or babble)");
}

std::string NoiseTypeName(NoiseType t) {
  switch (t) {
    case NoiseType::kWhite: return "white";
    case NoiseType::kDrift: return "drift";
    case NoiseType::kBabble: return "babble";
  }
  return "?";
}

namespace {

Mat MakeNoise(Eigen::Index frames, Eigen::Index dims, NoiseType type,
              Rng &rng) {
  Mat n(frames, dims);
  switch (type) {
    case NoiseType::kWhite:
      for (Eigen::Index i = 0; i < n.size(); ++i) n.data()[i] = rng.Normal();
      break;
    case NoiseType::kDrift: {
      // Random walk per dimension, mean removed.
      RowVec level = RowVec::Zero(dims);
      for (Eigen::Index t = 0; t < frames; ++t) {
        for (Eigen::Index d = 0; d < dims; ++d) level(d) += 0.2 * rng.Normal();
        n.row(t) = level;
      }
      n.rowwise() -= n.colwise().mean();
      break;
    }
    case NoiseType::kBabble: {
      // Slowly changing mixtures of random prototype-like vectors.
      const int k = 6;
      Mat sources(k, dims);
      for (Eigen::Index i = 0; i < sources.size(); ++i)
        sources.data()[i] = rng.Normal();
      RowVec mix(k);
      for (int j = 0; j < k; ++j) mix(j) = rng.Uniform();
      for (Eigen::Index t = 0; t < frames; ++t) {
        if (t % 8 == 0)
          for (int j = 0; j < k; ++j) mix(j) = rng.Uniform();
        n.row(t) = (mix / mix.sum()) * sources;
        for (Eigen::Index d = 0; d < dims; ++d) n(t, d) += 0.1 * rng.Normal();
      }
      break;
    }
  }
  return n;
}

double Power(const Mat &m) { return m.squaredNorm() / static_cast<double>(m.size()); }

}  // namespace

Utterance MixNoise(const Utterance &u, double snr_db, NoiseType type,
                   std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return u;
  if (!std::isfinite(snr_db))
    throw ContractError("SNR must be finite or the no-noise sentinel");
  const double ps = Power(u.features);
  if (!(ps > 0.0))
    throw ContractError("utterance " + u.id + " has zero signal power");
  Rng rng = Rng(seed).Derive("noise").Derive(NoiseTypeName(type));
  rng = rng.Derive(u.id);
  Mat noise = MakeNoise(u.features.rows(), u.features.cols(), type, rng);
  const double pn = Power(noise);
  if (!(pn > 0.0)) throw NumericError("generated noise has zero power");
  noise *= std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  Utterance out = u;
  out.features += noise;
  return out;
}

double MeasureSnr(const Mat &clean, const Mat &noisy) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols())
    throw DimensionError("MeasureSnr: " + ShapeString(clean) + " vs " +
                         ShapeString(noisy));
  return 10.0 * std::log10(Power(clean) / Power(noisy - clean));
}

}  // namespace syncasr
