// syncasr/experiment.h

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

// Experiment configuration files and the glue that binds a configured model
// to training, checkpoint loading and decoding.

#ifndef SYNCASR_EXPERIMENT_H_
#define SYNCASR_EXPERIMENT_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "syncasr/corpus.h"
#include "syncasr/decode.h"
#include "syncasr/training.h"

namespace syncasr {

enum class ModelKind { kTransformer, kCif, kLm };
ModelKind ParseModelKind(const std::string &name);
std::string ModelKindName(ModelKind kind);

struct DecodeSettings {
  BeamConfig beam;
  double gamma = 0.0;
  int nbest = 1;
};

/// Everything one command needs, read from a sectioned key=value file:
///
///   [experiment] kind seed out_dir
///   [corpus]     train_manifest test_manifest
///   [model]      n_heads d_model d_ff d_feat n_labels encoder_layers
///                decoder_layers dropout proximity_tau
///   [train]      warmup lr_k sampling_rate batch_frames batch_labels
///                max_steps checkpoint_every keep_checkpoints average_count
///   [augment]    enabled freq_width freq_masks time_width time_masks
///                time_ratio
///   [loss]       ctc quantity label_smoothing
///   [decode]     beam max_len length_normalize gamma nbest
///
/// Unset keys keep the defaults below; unknown sections or keys are errors.
struct ExperimentConfig {
  ModelKind kind = ModelKind::kCif;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::string train_manifest;
  std::string test_manifest;
  SanConfig model;
  TrainConfig train;
  LossWeights loss;
  DecodeSettings decode;

  /// Throws ContractError naming the field.  With `check_paths`, the
  /// manifests named in the config must exist.
  void Validate(bool check_paths) const;
};

/// Throws ContractError on syntax errors, unknown keys and bad values.
ExperimentConfig ParseExperimentConfig(const std::string &text);
ExperimentConfig LoadExperimentConfig(const std::string &path);
/// Round-trips through ParseExperimentConfig.
std::string FormatExperimentConfig(const ExperimentConfig &config);

/// Synthetic corpus parameters from a `[corpus]` section file.
CorpusSpec ParseCorpusSpec(const std::string &text);
CorpusSpec LoadCorpusSpec(const std::string &path);

/// One configured model of any kind.
class AsrModel {
 public:
  explicit AsrModel(const ExperimentConfig &config);

  ModelKind kind() const { return kind_; }
  const SanConfig &config() const { return config_; }
  ParameterSet &params();

  /// Loads model tensors (a training or averaged checkpoint).
  void Load(const std::string &checkpoint);

  Trainer::UtteranceLoss LossFn(const TrainConfig &train,
                                const LossWeights &weights) const;
  /// ASR models only.
  UtteranceDecoder Decoder(const BeamConfig &beam, const SanLm *lm = nullptr,
                           double gamma = 0.0) const;

  const TransformerModel *transformer() const { return transformer_.get(); }
  const CifModel *cif() const { return cif_.get(); }
  const SanLm *lm() const { return lm_.get(); }

 private:
  ModelKind kind_;
  SanConfig config_;
  std::unique_ptr<TransformerModel> transformer_;
  std::unique_ptr<CifModel> cif_;
  std::unique_ptr<SanLm> lm_;
};

/// Checks every label of every utterance against the model vocabulary;
/// throws ContractError naming the first offending utterance.
void CheckVocabulary(const std::vector<Utterance> &utts, const Vocab &vocab);

struct TrainSummary {
  int steps = 0;
  double wall_s = 0.0;
  std::string final_checkpoint;
};

/// Trains `config.kind` on config.train_manifest into config.out_dir (loss.csv,
/// checkpoints/, final.avg.bin, train_speed.json).  The language model reads
/// transcripts only.  `resume` names a training checkpoint or is empty.
TrainSummary RunTraining(
    const ExperimentConfig &config, const std::string &resume,
    const std::function<void(const LossRecord &)> &progress = nullptr);

}  // namespace syncasr

#endif  // SYNCASR_EXPERIMENT_H_
