// syncasr/grad-check.cc

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

#include "syncasr/grad-check.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace syncasr {

namespace {

double RelErr(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

void RequireFinite(double v, const std::string &what, Eigen::Index index) {
  if (!std::isfinite(v))
    throw NumericError("grad check: non-finite " + what + " at index " +
                       std::to_string(index));
}

}  // namespace

double GradCheck(const ScalarFn &f, const Mat &x, double eps) {
  Mat analytic;
  {
    Graph g;
    Var in = g.Leaf(x);
    Var out = f(g, in);
    RequireFinite(out.scalar(), "function value", -1);
    g.Backward(out);
    analytic = g.Grad(in);
    if (analytic.size() == 0) analytic = Mat::Zero(x.rows(), x.cols());
  }
  auto eval = [&](const Mat &at) {
    Graph g(false);
    return f(g, g.Leaf(at, false)).scalar();
  };
  double worst = 0.0;
  Mat probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double up = eval(probe);
    probe.data()[i] = orig - eps;
    const double down = eval(probe);
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    RequireFinite(numeric, "numeric gradient", i);
    RequireFinite(analytic.data()[i], "analytic gradient", i);
    worst = std::max(worst, RelErr(analytic.data()[i], numeric));
  }
  return worst;
}

double GradCheckParams(const std::function<Var(Graph &)> &loss,
                       const std::vector<Parameter *> &params, double eps,
                       int max_entries_per_param) {
  for (Parameter *p : params) p->ZeroGrad();
  {
    Graph g;
    Var out = loss(g);
    RequireFinite(out.scalar(), "function value", -1);
    g.Backward(out);
  }
  auto eval = [&]() {
    Graph g(false);
    return loss(g).scalar();
  };
  double worst = 0.0;
  for (Parameter *p : params) {
    const Eigen::Index n = p->value.size();
    Eigen::Index stride = 1;
    if (max_entries_per_param > 0 && n > max_entries_per_param)
      stride = n / max_entries_per_param;
    for (Eigen::Index i = 0; i < n; i += stride) {
      const double orig = p->value.data()[i];
      p->value.data()[i] = orig + eps;
      const double up = eval();
      p->value.data()[i] = orig - eps;
      const double down = eval();
      p->value.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      RequireFinite(numeric, "numeric gradient of " + p->name, i);
      RequireFinite(p->grad.data()[i], "analytic gradient of " + p->name, i);
      worst = std::max(worst, RelErr(p->grad.data()[i], numeric));
    }
  }
  return worst;
}

}  // namespace syncasr
