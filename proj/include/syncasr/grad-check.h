// syncasr/grad-check.h

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

#ifndef SYNCASR_GRAD_CHECK_H_
#define SYNCASR_GRAD_CHECK_H_

#include <functional>
#include <vector>

#include "syncasr/tensor.h"

namespace syncasr {

using ScalarFn = std::function<Var(Graph &, Var)>;

/// Compares the analytic gradient of `f` at `x` with central differences.
/// Returns max_i |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).  Throws NumericError
/// naming the component when f or either gradient is non-finite.
double GradCheck(const ScalarFn &f, const Mat &x, double eps = 1e-5);

/// Same comparison over the entries of a set of parameters; `loss` builds the
/// scalar from the parameters' current values.  When `max_entries_per_param`
/// is positive only that many evenly spaced entries of each tensor are probed.
double GradCheckParams(const std::function<Var(Graph &)> &loss,
                       const std::vector<Parameter *> &params,
                       double eps = 1e-5, int max_entries_per_param = 0);

}  // namespace syncasr

#endif  // SYNCASR_GRAD_CHECK_H_
