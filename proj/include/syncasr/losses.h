// syncasr/losses.h

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

#ifndef SYNCASR_LOSSES_H_
#define SYNCASR_LOSSES_H_

#include <stdexcept>
#include <vector>

#include "syncasr/tensor.h"

namespace syncasr {

/// The reference needs more frames than the input has.  nll() is +inf.
class InfeasibleAlignment : public std::domain_error {
 public:
  using std::domain_error::domain_error;
  double nll() const;
};

/// Label-smoothed cross entropy, averaged over positions whose target is not
/// `pad`.  The target distribution is (1 - smoothing) one-hot plus
/// smoothing / vocab on every class.  Targets outside [0, vocab) throw
/// std::out_of_range.
Var CrossEntropySmoothed(Var logits, const std::vector<int> &targets,
                         double smoothing, int pad);

/// Frames needed to emit `refs`: one per label plus one blank between each
/// pair of equal neighbours.
int CtcMinFrames(const std::vector<int> &refs);

/// Negative log-likelihood of `refs` under frame logits [U x vocab] with the
/// given blank index, by the log-space forward recursion.  Returns +inf when
/// U < CtcMinFrames(refs).
double CtcNll(const Mat &logits, const std::vector<int> &refs, int blank);

/// Differentiable CTC loss.  Throws InfeasibleAlignment when U is too short.
Var CtcLoss(Var logits, const std::vector<int> &refs, int blank);

/// |sum(alpha) - target| for an unscaled weight column.
Var QuantityLoss(Var alpha, int target);

}  // namespace syncasr

#endif  // SYNCASR_LOSSES_H_
