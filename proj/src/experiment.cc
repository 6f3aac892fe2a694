// syncasr/experiment.cc

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

#include "syncasr/experiment.h"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

namespace syncasr {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

ModelKind ParseModelKind(const std::string &name) {
  if (name == "transformer") return ModelKind::kTransformer;
  if (name == "cif") return ModelKind::kCif;
  if (name == "lm") return ModelKind::kLm;
  throw ContractError("unknown model kind '" + name +
                      "' (expected transformer, cif or lm)");
}

std::string ModelKindName(ModelKind kind) {
  switch (kind) {
    case ModelKind::kTransformer: return "transformer";
    case ModelKind::kCif: return "cif";
    case ModelKind::kLm: return "lm";
  }
  return "?";
}

void ExperimentConfig::Validate(bool check_paths) const {
  model.Validate();
  train.Validate();
  loss.Validate();
  decode.beam.Validate();
  if (!(decode.gamma >= 0.0))
    throw ContractError("decode.gamma: must be >= 0");
  if (decode.nbest < 1) throw ContractError("decode.nbest: must be >= 1");
  if (!check_paths) return;
  for (const auto &[key, path] : {std::pair{"corpus.train_manifest",
                                            train_manifest},
                                  {"corpus.test_manifest", test_manifest}})
    if (!path.empty() && !fs::exists(path))
      throw ContractError(std::string(key) + ": " + path + " does not exist");
}

namespace {

template <typename T>
T ParseNumber(const std::string &key, const std::string &text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  if (!is || !(is >> std::ws).eof())
    throw ContractError(key + ": cannot parse '" + text + "'");
  return v;
}

bool ParseBool(const std::string &key, const std::string &text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ContractError(key + ": expected true or false, got '" + text + "'");
}

using Setter = std::function<void(const std::string &key,
                                  const std::string &value)>;

template <typename T>
Setter Number(T *field) {
  return [field](const std::string &k, const std::string &v) {
    *field = ParseNumber<T>(k, v);
  };
}

Setter Flag(bool *field) {
  return [field](const std::string &k, const std::string &v) {
    *field = ParseBool(k, v);
  };
}

Setter Text(std::string *field) {
  return [field](const std::string &, const std::string &v) { *field = v; };
}

pt::ptree ReadIni(const std::string &text) {
  std::istringstream is(text);
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error &e) {
    throw ContractError("config line " + std::to_string(e.line()) + ": " +
                        e.message());
  }
  return tree;
}

void Apply(const pt::ptree &tree, const std::map<std::string, Setter> &setters) {
  for (const auto &[section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ContractError("config key '" + section +
                          "' must live inside a [section]");
    for (const auto &[key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = setters.find(full);
      if (it == setters.end())
        throw ContractError("unknown config key '" + full + "'");
      it->second(full, value.data());
    }
  }
}

std::string Exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string ReadText(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw ContractError("cannot read config " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

ExperimentConfig ParseExperimentConfig(const std::string &text) {
  ExperimentConfig c;
  std::string kind = ModelKindName(c.kind);
  SanConfig &m = c.model;
  TrainConfig &t = c.train;
  SpecAugmentConfig &a = c.train.augment;
  const std::map<std::string, Setter> setters = {
      {"experiment.kind", Text(&kind)},
      {"experiment.seed", Number(&c.seed)},
      {"experiment.out_dir", Text(&c.out_dir)},
      {"corpus.train_manifest", Text(&c.train_manifest)},
      {"corpus.test_manifest", Text(&c.test_manifest)},
      {"model.n_heads", Number(&m.n_heads)},
      {"model.d_model", Number(&m.d_model)},
      {"model.d_ff", Number(&m.d_ff)},
      {"model.d_feat", Number(&m.d_feat)},
      {"model.n_labels", Number(&m.vocab.n_labels)},
      {"model.encoder_layers", Number(&m.encoder_layers)},
      {"model.decoder_layers", Number(&m.decoder_layers)},
      {"model.dropout", Number(&m.dropout)},
      {"model.proximity_tau", Number(&m.proximity_tau)},
      {"train.warmup", Number(&t.warmup)},
      {"train.lr_k", Number(&t.lr_k)},
      {"train.sampling_rate", Number(&t.sampling_rate)},
      {"train.batch_frames", Number(&t.batch_frames)},
      {"train.batch_labels", Number(&t.batch_labels)},
      {"train.max_steps", Number(&t.max_steps)},
      {"train.checkpoint_every", Number(&t.checkpoint_every)},
      {"train.keep_checkpoints", Number(&t.keep_checkpoints)},
      {"train.average_count", Number(&t.average_count)},
      {"augment.enabled", Flag(&a.enabled)},
      {"augment.freq_width", Number(&a.freq_width)},
      {"augment.freq_masks", Number(&a.freq_masks)},
      {"augment.time_width", Number(&a.time_width)},
      {"augment.time_masks", Number(&a.time_masks)},
      {"augment.time_ratio", Number(&a.time_ratio)},
      {"loss.ctc", Number(&c.loss.ctc)},
      {"loss.quantity", Number(&c.loss.quantity)},
      {"loss.label_smoothing", Number(&c.loss.label_smoothing)},
      {"decode.beam", Number(&c.decode.beam.beam)},
      {"decode.max_len", Number(&c.decode.beam.max_len)},
      {"decode.length_normalize", Flag(&c.decode.beam.length_normalize)},
      {"decode.gamma", Number(&c.decode.gamma)},
      {"decode.nbest", Number(&c.decode.nbest)},
  };
  Apply(ReadIni(text), setters);
  c.kind = ParseModelKind(kind);
  c.train.seed = c.seed;
  c.Validate(false);
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::string &path) {
  return ParseExperimentConfig(ReadText(path));
}

std::string FormatExperimentConfig(const ExperimentConfig &c) {
  std::ostringstream os;
  const SanConfig &m = c.model;
  const TrainConfig &t = c.train;
  const SpecAugmentConfig &a = t.augment;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "[experiment]\nkind = " << ModelKindName(c.kind)
     << "\nseed = " << c.seed << "\nout_dir = " << c.out_dir << "\n\n"
     << "[corpus]\ntrain_manifest = " << c.train_manifest
     << "\ntest_manifest = " << c.test_manifest << "\n\n"
     << "[model]\nn_heads = " << m.n_heads << "\nd_model = " << m.d_model
     << "\nd_ff = " << m.d_ff << "\nd_feat = " << m.d_feat
     << "\nn_labels = " << m.vocab.n_labels
     << "\nencoder_layers = " << m.encoder_layers
     << "\ndecoder_layers = " << m.decoder_layers
     << "\ndropout = " << Exact(m.dropout)
     << "\nproximity_tau = " << Exact(m.proximity_tau) << "\n\n"
     << "[train]\nwarmup = " << t.warmup << "\nlr_k = " << Exact(t.lr_k)
     << "\nsampling_rate = " << Exact(t.sampling_rate)
     << "\nbatch_frames = " << t.batch_frames
     << "\nbatch_labels = " << t.batch_labels
     << "\nmax_steps = " << t.max_steps
     << "\ncheckpoint_every = " << t.checkpoint_every
     << "\nkeep_checkpoints = " << t.keep_checkpoints
     << "\naverage_count = " << t.average_count << "\n\n"
     << "[augment]\nenabled = " << b(a.enabled)
     << "\nfreq_width = " << a.freq_width << "\nfreq_masks = " << a.freq_masks
     << "\ntime_width = " << a.time_width << "\ntime_masks = " << a.time_masks
     << "\ntime_ratio = " << Exact(a.time_ratio) << "\n\n"
     << "[loss]\nctc = " << Exact(c.loss.ctc)
     << "\nquantity = " << Exact(c.loss.quantity)
     << "\nlabel_smoothing = " << Exact(c.loss.label_smoothing) << "\n\n"
     << "[decode]\nbeam = " << c.decode.beam.beam
     << "\nmax_len = " << c.decode.beam.max_len
     << "\nlength_normalize = " << b(c.decode.beam.length_normalize)
     << "\ngamma = " << Exact(c.decode.gamma) << "\nnbest = " << c.decode.nbest
     << "\n";
  return os.str();
}

CorpusSpec ParseCorpusSpec(const std::string &text) {
  CorpusSpec s;
  const std::map<std::string, Setter> setters = {
      {"corpus.n_labels", Number(&s.n_labels)},
      {"corpus.d_feat", Number(&s.d_feat)},
      {"corpus.min_labels", Number(&s.min_labels)},
      {"corpus.max_labels", Number(&s.max_labels)},
      {"corpus.min_frames", Number(&s.min_frames)},
      {"corpus.max_frames", Number(&s.max_frames)},
      {"corpus.blur", Number(&s.blur)},
      {"corpus.noise_std", Number(&s.noise_std)},
      {"corpus.speakers", Number(&s.speakers)},
      {"corpus.speaker_offset_std", Number(&s.speaker_offset_std)},
      {"corpus.grammar_strength", Number(&s.grammar_strength)},
      {"corpus.seed", Number(&s.seed)},
  };
  Apply(ReadIni(text), setters);
  s.Validate();
  return s;
}

CorpusSpec LoadCorpusSpec(const std::string &path) {
  return ParseCorpusSpec(ReadText(path));
}

// ---------------------------------------------------------------------------

AsrModel::AsrModel(const ExperimentConfig &config)
    : kind_(config.kind), config_(config.model) {
  config.model.Validate();
  switch (kind_) {
    case ModelKind::kTransformer:
      transformer_ = std::make_unique<TransformerModel>(config_, config.seed);
      break;
    case ModelKind::kCif:
      cif_ = std::make_unique<CifModel>(config_, config.seed);
      break;
    case ModelKind::kLm:
      lm_ = std::make_unique<SanLm>(config_, config.seed);
      break;
  }
}

ParameterSet &AsrModel::params() {
  if (transformer_) return transformer_->params();
  if (cif_) return cif_->params();
  return lm_->params();
}

void AsrModel::Load(const std::string &checkpoint) {
  Restore(params(), ReadCheckpoint(checkpoint));
}

Trainer::UtteranceLoss AsrModel::LossFn(const TrainConfig &train,
                                        const LossWeights &weights) const {
  switch (kind_) {
    case ModelKind::kTransformer:
      return [m = transformer_.get(), train, weights](
                 const TrainExample &ex, UtteranceRngs &rngs, double scale) {
        return TransformerLoss(*m, ex, weights, train, rngs, true, scale);
      };
    case ModelKind::kCif:
      return [m = cif_.get(), train, weights](
                 const TrainExample &ex, UtteranceRngs &rngs, double scale) {
        return CifLoss(*m, ex, weights, train, rngs, true, scale);
      };
    case ModelKind::kLm:
      break;
  }
  return [m = lm_.get(), weights](const TrainExample &ex, UtteranceRngs &rngs,
                                  double scale) {
    return LmLoss(*m, ex, weights, rngs, true, scale);
  };
}

UtteranceDecoder AsrModel::Decoder(const BeamConfig &beam, const SanLm *lm,
                                   double gamma) const {
  if (transformer_) return MakeTransformerDecoder(*transformer_, beam, lm, gamma);
  if (cif_) return MakeCifDecoder(*cif_, beam, lm, gamma);
  throw ContractError("a language model cannot decode audio");
}

void CheckVocabulary(const std::vector<Utterance> &utts, const Vocab &vocab) {
  for (const Utterance &u : utts)
    for (int y : u.labels)
      if (!vocab.IsLabel(y))
        throw ContractError("utterance " + u.id + " has label " +
                            std::to_string(y) + " outside the model's " +
                            std::to_string(vocab.n_labels) + " labels");
}

TrainSummary RunTraining(const ExperimentConfig &config,
                         const std::string &resume,
                         const std::function<void(const LossRecord &)> &progress) {
  config.Validate(true);
  if (config.train_manifest.empty())
    throw ContractError("corpus.train_manifest: required for training");
  if (config.out_dir.empty())
    throw ContractError("experiment.out_dir: required for training");
  const bool lm = config.kind == ModelKind::kLm;
  const std::vector<Utterance> utts = LoadManifest(config.train_manifest, !lm);
  CheckVocabulary(utts, config.model.vocab);

  std::vector<TrainExample> data;
  std::vector<int> lengths;
  for (const Utterance &u : utts) {
    if (!lm && u.features.cols() != config.model.d_feat)
      throw ContractError("utterance " + u.id + " has " +
                          std::to_string(u.features.cols()) +
                          " feature dims, model.d_feat is " +
                          std::to_string(config.model.d_feat));
    data.push_back({u.id, u.features, u.labels});
    lengths.push_back(lm ? static_cast<int>(u.labels.size()) + 1
                         : static_cast<int>(u.features.rows()));
  }

  AsrModel model(config);
  TrainConfig train = config.train;
  train.seed = config.seed;
  Trainer trainer(model.params(), config.model.d_model, train,
                  model.LossFn(train, config.loss));
  if (!resume.empty()) trainer.Resume(resume);
  const int start = trainer.step();

  fs::create_directories(config.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  trainer.Run(data, lengths, lm ? train.batch_labels : train.batch_frames,
              config.out_dir, progress);
  TrainSummary s;
  s.steps = trainer.step() - start;
  s.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                 .count();
  s.final_checkpoint = (fs::path(config.out_dir) / "final.avg.bin").string();

  nlohmann::ordered_json j;
  j["steps"] = s.steps;
  j["wall_s"] = s.wall_s;
  j["steps_per_s"] = s.wall_s > 0 ? s.steps / s.wall_s : 0.0;
  std::ofstream(fs::path(config.out_dir) / "train_speed.json") << j.dump(2)
                                                               << '\n';
  return s;
}

}  // namespace syncasr
