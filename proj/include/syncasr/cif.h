// syncasr/cif.h

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

// Continuous integrate-and-fire: per-step weight prediction and the
// left-to-right accumulation that locates label boundaries on the encoder
// output and emits one integrated embedding per located label.

#ifndef SYNCASR_CIF_H_
#define SYNCASR_CIF_H_

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "syncasr/san.h"

namespace syncasr {

class DegenerateWeights : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A fire happens once the accumulated weight reaches 1 - kFireTolerance.
/// The slack absorbs round-off in sums that equal an integer in exact
/// arithmetic (e.g. 0.6 + 0.6 + 0.8, or weights scaled to sum to S).
inline constexpr double kFireThreshold = 1.0;
inline constexpr double kFireTolerance = 1e-10;

/// What to do with weight left in the accumulator after the last step.
enum class ResidualPolicy {
  kRound,    ///< fire it as a final label when >= 0.5, else drop it
  kDiscard,  ///< never fire it
};

struct FiringFraction {
  int step = 0;
  double weight = 0.0;
  // d(weight)/d(alpha_k) = grad_sign for grad_lo <= k <= grad_hi, else 0.
  int grad_sign = 0;
  int grad_lo = 0;
  int grad_hi = -1;
};

struct FiredLabel {
  std::vector<FiringFraction> fractions;
  /// Fired from the end-of-sequence residual rather than a threshold crossing.
  bool from_residual = false;

  int first_step() const { return fractions.front().step; }
  int last_step() const { return fractions.back().step; }
  double total() const;
};

struct FiringPlan {
  std::vector<FiredLabel> labels;
  /// Accumulated weight left after the last step (before the policy applies).
  double residual = 0.0;
  /// Encoder steps scanned; equals U.
  int steps = 0;

  int fire_count() const { return static_cast<int>(labels.size()); }
};

/// Runs the accumulator over `alpha` (length U).  Throws NumericError naming
/// the step for non-finite weights.
FiringPlan PlanFiring(const Eigen::Ref<const Eigen::VectorXd> &alpha,
                      ResidualPolicy policy);

/// c_i = sum over fractions of weight * h_step.  Returns [S x d].
template <typename Derived>
Mat Integrate(const Eigen::MatrixBase<Derived> &h, const FiringPlan &plan) {
  Mat c = Mat::Zero(static_cast<Eigen::Index>(plan.labels.size()), h.cols());
  for (std::size_t i = 0; i < plan.labels.size(); ++i)
    for (const FiringFraction &f : plan.labels[i].fractions)
      c.row(static_cast<Eigen::Index>(i)) += f.weight * h.row(f.step);
  return c;
}

struct Firing {
  Mat embeddings;  ///< S x d
  FiringPlan plan;
  Eigen::VectorXd alpha;  ///< weights the plan was computed from
};

/// PlanFiring + Integrate with finiteness checks on h.
Firing IntegrateAndFire(const Mat &h,
                        const Eigen::Ref<const Eigen::VectorXd> &alpha,
                        ResidualPolicy policy);

/// alpha * S / sum(alpha).  Throws DegenerateWeights when sum(alpha) == 0.
Eigen::VectorXd ScaleWeights(const Eigen::Ref<const Eigen::VectorXd> &alpha,
                             int target);

/// Differentiable scale_weights on a U x 1 column.
Var ScaleWeightsOp(Var alpha, int target);
/// Differentiable integrate-and-fire: h [U x d], alpha [U x 1] -> c [S x d].
/// Gradients reach alpha through the split fractions.
Var IntegrateAndFireOp(Var h, Var alpha, ResidualPolicy policy,
                       FiringPlan *plan_out = nullptr);

/// Tab-separated alignment dump, one line per fired label:
/// utt_id, label, first step, last step, residual.
void WriteAlignment(std::ostream &os, const std::string &utt_id,
                    const FiringPlan &plan, const std::vector<int> &labels);

/// Width-3 same-padded convolution (d_model filters), layer norm, ReLU,
/// 1-unit projection, sigmoid.
class WeightPredictor {
 public:
  WeightPredictor() = default;
  WeightPredictor(ParameterSet &params, const std::string &name,
                  const SanConfig &config, Rng &rng);

  /// encoded [U x d] -> alpha [U x 1], each in (0, 1).
  Var Forward(Graph &g, Var encoded, bool train, Rng *rng) const;
  Eigen::VectorXd Predict(const Mat &encoded) const;

  Parameter *projection_weight() const { return out_.weight(); }
  Parameter *projection_bias() const { return out_.bias(); }

 private:
  double dropout_ = 0.0;
  Parameter *kernel_ = nullptr, *conv_bias_ = nullptr;
  LayerNormalization ln_;
  Linear out_;
};

/// Incremental decoding state of the CIF model's decoder.
struct CifDecoderCache {
  DecoderStack::Cache stack;
};

/// Frame-synchronous model: shared encoder, weight predictor, CIF, and an
/// autoregressive SAN decoder fed [embedding(y_{i-1}); c_i] at step i.  The
/// output layer sees [decoder state; c_i].
class CifModel {
 public:
  explicit CifModel(const SanConfig &config, std::uint64_t seed = 1);

  const SanConfig &config() const { return config_; }
  ParameterSet &params() { return params_; }
  const ParameterSet &params() const { return params_; }
  const Encoder &encoder() const { return encoder_; }
  const WeightPredictor &predictor() const { return predictor_; }

  struct Outputs {
    Var encoded;     ///< U x d
    Var alpha;       ///< U x 1, unscaled
    Var ctc_logits;  ///< U x vocab
    Var logits;      ///< S x vocab
    FiringPlan plan;
  };

  /// With labels: weights are scaled to the label count and the decoder is
  /// teacher-forced with `decoder_inputs` (defaults to [eos, y_1 .. y_{S-1}]);
  /// `train` only switches dropout and augmentation noise.  Without labels
  /// (train must be false): unscaled weights, rounding residual policy and
  /// greedy label feedback.
  Outputs Forward(Graph &g, Var features, const std::vector<int> *labels,
                  bool train, Rng *rng,
                  const std::vector<int> *decoder_inputs = nullptr) const;

  Var CtcLogits(Graph &g, Var encoded) const;
  /// Teacher-forced decoder over fired embeddings.
  Var DecoderLogits(Graph &g, Var embeddings, const std::vector<int> &inputs,
                    bool train, Rng *rng) const;

  Firing Fire(const EncodedSequence &enc) const;
  CifDecoderCache StartDecoding() const;
  /// Feeds the last label of `prefix` (start symbol when empty) together with
  /// the embedding of the label being predicted; returns logits.
  RowVec DecoderStep(const std::vector<int> &prefix, const RowVec &embedding,
                     CifDecoderCache &cache) const;

 private:
  SanConfig config_;
  ParameterSet params_;
  Encoder encoder_;
  Linear ctc_head_;
  WeightPredictor predictor_;
  Parameter *embedding_ = nullptr;
  Linear input_;
  DecoderStack decoder_;
  Linear output_;
};

}  // namespace syncasr

#endif  // SYNCASR_CIF_H_
