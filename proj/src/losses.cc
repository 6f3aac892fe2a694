// syncasr/losses.cc

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

#include "syncasr/losses.h"

#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace syncasr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

Mat LogSoftmaxMat(const Mat &x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return out;
}

// Forward and backward variables over the blank-augmented label sequence.
struct CtcLattice {
  std::vector<int> ext;  // blank, y1, blank, y2, ..., blank
  Mat log_alpha;         // U x L
  Mat log_beta;          // U x L, emission at t included
  double log_likelihood = kNegInf;
};

CtcLattice RunCtc(const Mat &log_probs, const std::vector<int> &refs,
                  int blank, bool with_beta) {
  CtcLattice lat;
  lat.ext.push_back(blank);
  for (int y : refs) {
    lat.ext.push_back(y);
    lat.ext.push_back(blank);
  }
  const int n = static_cast<int>(log_probs.rows());
  const int l = static_cast<int>(lat.ext.size());
  const auto &ext = lat.ext;
  auto can_skip = [&](int s) {
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };
  lat.log_alpha = Mat::Constant(n, l, kNegInf);
  Mat &a = lat.log_alpha;
  a(0, 0) = log_probs(0, ext[0]);
  if (l > 1) a(0, 1) = log_probs(0, ext[1]);
  for (int t = 1; t < n; ++t)
    for (int s = 0; s < l; ++s) {
      double v = a(t - 1, s);
      if (s >= 1) v = LogAdd(v, a(t - 1, s - 1));
      if (can_skip(s)) v = LogAdd(v, a(t - 1, s - 2));
      if (v != kNegInf) a(t, s) = v + log_probs(t, ext[s]);
    }
  lat.log_likelihood = a(n - 1, l - 1);
  if (l > 1) lat.log_likelihood = LogAdd(lat.log_likelihood, a(n - 1, l - 2));
  if (!with_beta) return lat;

  lat.log_beta = Mat::Constant(n, l, kNegInf);
  Mat &b = lat.log_beta;
  b(n - 1, l - 1) = log_probs(n - 1, ext[l - 1]);
  if (l > 1) b(n - 1, l - 2) = log_probs(n - 1, ext[l - 2]);
  for (int t = n - 2; t >= 0; --t)
    for (int s = 0; s < l; ++s) {
      double v = b(t + 1, s);
      if (s + 1 < l) v = LogAdd(v, b(t + 1, s + 1));
      if (s + 2 < l && can_skip(s + 2)) v = LogAdd(v, b(t + 1, s + 2));
      if (v != kNegInf) b(t, s) = v + log_probs(t, ext[s]);
    }
  return lat;
}

void CheckCtcInputs(const Mat &logits, const std::vector<int> &refs,
                    int blank) {
  if (logits.rows() < 1)
    throw DimensionError("CTC needs at least one frame, got " +
                         ShapeString(logits));
  if (blank < 0 || blank >= logits.cols())
    throw std::out_of_range("CTC blank " + std::to_string(blank) +
                            " outside logits " + ShapeString(logits));
  for (int y : refs)
    if (y < 0 || y >= logits.cols() || y == blank)
      throw std::out_of_range("CTC reference label " + std::to_string(y) +
                              " invalid for logits " + ShapeString(logits));
}

}  // namespace

double InfeasibleAlignment::nll() const {
  return std::numeric_limits<double>::infinity();
}

Var CrossEntropySmoothed(Var logits, const std::vector<int> &targets,
                         double smoothing, int pad) {
  const Mat &x = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != x.rows())
    throw DimensionError("cross entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + ShapeString(x));
  const Eigen::Index vocab = x.cols();
  for (int y : targets)
    if (y != pad && (y < 0 || y >= vocab))
      throw std::out_of_range("target " + std::to_string(y) +
                              " outside vocabulary of " +
                              std::to_string(vocab));
  const Mat log_p = LogSoftmaxMat(x);
  const double off = smoothing / static_cast<double>(vocab);
  double total = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y == pad) continue;
    total -= (1.0 - smoothing) * log_p(i, y) + off * log_p.row(i).sum();
    ++count;
  }
  Mat out(1, 1);
  out(0, 0) = count > 0 ? total / count : 0.0;
  const std::size_t in = logits.id();
  return logits.graph()->Emit(
      std::move(out), {logits},
      [in, log_p, targets, smoothing, off, pad, count](Graph &g,
                                                       std::size_t self) {
        if (count == 0) return;
        const double scale = g.OutputGrad(self)(0, 0) / count;
        Mat &gx = g.GradBuffer(in);
        for (Eigen::Index i = 0; i < log_p.rows(); ++i) {
          const int y = targets[static_cast<std::size_t>(i)];
          if (y == pad) continue;
          RowVec d = log_p.row(i).array().exp() - off;
          d(y) -= 1.0 - smoothing;
          gx.row(i) += scale * d;
        }
      });
}

int CtcMinFrames(const std::vector<int> &refs) {
  int n = static_cast<int>(refs.size());
  for (std::size_t i = 1; i < refs.size(); ++i)
    if (refs[i] == refs[i - 1]) ++n;
  return n;
}

double CtcNll(const Mat &logits, const std::vector<int> &refs, int blank) {
  CheckCtcInputs(logits, refs, blank);
  if (logits.rows() < CtcMinFrames(refs))
    return std::numeric_limits<double>::infinity();
  return -RunCtc(LogSoftmaxMat(logits), refs, blank, false).log_likelihood;
}

Var CtcLoss(Var logits, const std::vector<int> &refs, int blank) {
  const Mat &x = logits.value();
  CheckCtcInputs(x, refs, blank);
  if (x.rows() < CtcMinFrames(refs))
    throw InfeasibleAlignment(
        "CTC reference of " + std::to_string(refs.size()) + " labels needs " +
        std::to_string(CtcMinFrames(refs)) + " frames, got " +
        std::to_string(x.rows()));
  const Mat log_probs = LogSoftmaxMat(x);
  CtcLattice lat = RunCtc(log_probs, refs, blank, true);
  Mat out(1, 1);
  out(0, 0) = -lat.log_likelihood;
  if (!std::isfinite(out(0, 0)))
    throw NumericError("CTC loss is not finite");
  const std::size_t in = logits.id();
  auto shared = std::make_shared<CtcLattice>(std::move(lat));
  return logits.graph()->Emit(
      std::move(out), {logits},
      [in, shared, log_probs](Graph &g, std::size_t self) {
        const CtcLattice &lat = *shared;
        const double up = g.OutputGrad(self)(0, 0);
        Mat grad = log_probs.array().exp();
        const int l = static_cast<int>(lat.ext.size());
        for (Eigen::Index t = 0; t < log_probs.rows(); ++t)
          for (int s = 0; s < l; ++s) {
            const double lg = lat.log_alpha(t, s) + lat.log_beta(t, s);
            if (lg == kNegInf) continue;
            grad(t, lat.ext[s]) -= std::exp(lg - log_probs(t, lat.ext[s]) -
                                            lat.log_likelihood);
          }
        g.GradBuffer(in) += up * grad;
      });
}

Var QuantityLoss(Var alpha, int target) {
  Mat s(1, 1);
  s(0, 0) = static_cast<double>(target);
  return Abs(Sub(Sum(alpha), alpha.graph()->Constant(std::move(s))));
}

}  // namespace syncasr
