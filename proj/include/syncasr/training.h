// syncasr/training.h

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

// Optimizer, schedule, augmentation and the training loop shared by the
// transformer, the CIF model and the SAN language model.

#ifndef SYNCASR_TRAINING_H_
#define SYNCASR_TRAINING_H_

#include <functional>
#include <string>
#include <vector>

#include "syncasr/checkpoint.h"
#include "syncasr/cif.h"
#include "syncasr/losses.h"
#include "syncasr/san.h"

namespace syncasr {

class DivergenceError : public NumericError {
 public:
  DivergenceError(int step, const std::string &what)
      : NumericError(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct LossWeights {
  double ctc = 0.5;       ///< lambda_1
  double quantity = 1.0;  ///< lambda_2, CIF model only
  double label_smoothing = 0.2;
  void Validate() const;
};

struct SpecAugmentConfig {
  bool enabled = true;
  int freq_width = 4;   ///< F
  int freq_masks = 2;   ///< m_F
  int time_width = 20;  ///< T
  int time_masks = 2;   ///< m_T
  double time_ratio = 0.2;  ///< p: a time mask covers at most p * frames
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct TrainConfig {
  int warmup = 400;
  double lr_k = 1.0;
  double sampling_rate = 0.5;
  SpecAugmentConfig augment;
  AdamConfig adam;
  /// Frames per batch; utterances of similar length are batched together.
  int batch_frames = 2000;
  /// Label budget per batch for the language model.
  int batch_labels = 400;
  int max_steps = 300;
  int checkpoint_every = 100;
  int keep_checkpoints = 10;
  int average_count = 10;
  std::uint64_t seed = 1;
  void Validate() const;
};

/// k * d^-0.5 * min(step^-0.5, step * warmup^-1.5); step >= 1.
double NoamLr(int step, int d_model, int warmup, double k);

/// Position i takes preds[i] with probability `rate`, else refs[i].
std::vector<int> ScheduledSamplingMix(const std::vector<int> &refs,
                                      const std::vector<int> &preds,
                                      double rate, Rng &rng);

/// Frequency and time masking with zeros.  Band widths are drawn uniformly
/// from [0, F]; span widths from [0, min(T, floor(p * frames))].
Mat SpecAugment(const Mat &features, const SpecAugmentConfig &config,
                Rng &rng);

class Adam {
 public:
  Adam(ParameterSet &params, const AdamConfig &config);
  /// Applies one update from the accumulated gradients.
  void Step(double lr);
  int steps() const { return steps_; }

  /// Moments as "adam.m/<param>" and "adam.v/<param>", plus "adam.steps".
  std::vector<NamedTensor> State() const;
  void LoadState(const std::vector<NamedTensor> &tensors);

 private:
  ParameterSet *params_;
  AdamConfig config_;
  std::vector<Mat> m_, v_;
  int steps_ = 0;
};

struct TrainExample {
  std::string id;
  Mat features;  ///< empty for language-model training
  std::vector<int> labels;
};

struct LossParts {
  double total = 0.0;
  double ce = 0.0;
  double ctc = 0.0;
  double quantity = 0.0;
};

/// Per-utterance random streams, derived from (seed, step, position).
struct UtteranceRngs {
  Rng augment;
  Rng sampling;
  Rng dropout;
  static UtteranceRngs For(std::uint64_t seed, int step, int position);
};

/// Each function builds one utterance's loss.  With grad_scale > 0 it also
/// back-propagates grad_scale * total into the parameter gradients; with
/// train == false augmentation, dropout and scheduled sampling are off.
LossParts TransformerLoss(const TransformerModel &model,
                          const TrainExample &ex, const LossWeights &weights,
                          const TrainConfig &config, UtteranceRngs &rngs,
                          bool train, double grad_scale);
LossParts CifLoss(const CifModel &model, const TrainExample &ex,
                  const LossWeights &weights, const TrainConfig &config,
                  UtteranceRngs &rngs, bool train, double grad_scale);
LossParts LmLoss(const SanLm &lm, const TrainExample &ex,
                 const LossWeights &weights, UtteranceRngs &rngs, bool train,
                 double grad_scale);

struct LossRecord {
  int step = 0;
  double lr = 0.0;
  LossParts loss;
};

void WriteLossCsv(const std::string &path,
                  const std::vector<LossRecord> &records);
std::vector<LossRecord> ReadLossCsv(const std::string &path);

/// Groups example indices into batches of similar length whose summed
/// length stays within `budget` (a longer single example forms its own batch).
std::vector<std::vector<int>> MakeBatches(const std::vector<int> &lengths,
                                          int budget);

/// Runs Adam under the Noam schedule over length-bucketed batches.  The batch
/// for step s is a pure function of (seed, s), so a run resumed from a
/// checkpoint reproduces the uninterrupted run.
class Trainer {
 public:
  using UtteranceLoss = std::function<LossParts(
      const TrainExample &, UtteranceRngs &, double grad_scale)>;

  Trainer(ParameterSet &params, int d_model, TrainConfig config,
          UtteranceLoss loss);

  /// Loads parameters, optimizer moments and the step counter.
  void Resume(const std::string &checkpoint);
  int step() const { return step_; }

  /// Trains until config.max_steps.  `lengths[i]` is the batching length of
  /// data[i].  With a non-empty out_dir, writes loss.csv, periodic
  /// checkpoints under out_dir/checkpoints and out_dir/final.avg.bin.
  std::vector<LossRecord> Run(
      const std::vector<TrainExample> &data, const std::vector<int> &lengths,
      int budget, const std::string &out_dir,
      const std::function<void(const LossRecord &)> &progress = nullptr);

  /// Full training state at the current step.
  std::vector<NamedTensor> State() const;

 private:
  ParameterSet *params_;
  int d_model_;
  TrainConfig config_;
  UtteranceLoss loss_;
  Adam adam_;
  int step_ = 0;
};

/// Drops optimizer and trainer entries from a training checkpoint.
std::vector<NamedTensor> ModelTensors(const std::vector<NamedTensor> &state);

/// Checkpoint files under dir (name ckpt-<step>.bin), oldest first.
std::vector<std::string> ListCheckpoints(const std::string &dir);

}  // namespace syncasr

#endif  // SYNCASR_TRAINING_H_
