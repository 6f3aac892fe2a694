// tests/cif-test.cc

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

#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "syncasr/cif.h"
#include "syncasr/grad-check.h"

namespace syncasr {
namespace {

Mat RandomMat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal();
  return m;
}

Eigen::VectorXd Vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x(i++) = d;
  return x;
}

Eigen::VectorXd RandomWeights(int n, double lo, double hi, Rng &rng) {
  Eigen::VectorXd a(n);
  for (int i = 0; i < n; ++i) a(i) = lo + (hi - lo) * rng.Uniform();
  return a;
}

// Reference accumulator: label i (1-based) completes at the first step whose
// running sum reaches i.  Works on prefix sums only, no splitting.
struct Reference {
  std::vector<int> fire_steps;
  double residual;
};

Reference BruteForce(const Eigen::VectorXd &alpha) {
  Reference r;
  double cum = 0.0;
  int next = 1;
  for (Eigen::Index u = 0; u < alpha.size(); ++u) {
    cum += alpha(u);
    while (cum >= next - kFireTolerance) {
      r.fire_steps.push_back(static_cast<int>(u));
      ++next;
    }
  }
  r.residual = cum - (next - 1);
  return r;
}

void ExpectPlanInvariants(const FiringPlan &plan,
                          const Eigen::VectorXd &alpha) {
  std::vector<double> used(static_cast<std::size_t>(alpha.size()), 0.0);
  int last = 0;
  for (const FiredLabel &l : plan.labels) {
    if (!l.from_residual) EXPECT_NEAR(l.total(), 1.0, 1e-9);
    for (const FiringFraction &f : l.fractions) {
      EXPECT_GE(f.weight, 0.0);
      EXPECT_GE(f.step, last);
      last = f.step;
      used[static_cast<std::size_t>(f.step)] += f.weight;
    }
  }
  // Weight left in the accumulator belongs to the trailing steps.
  double residual = plan.residual;
  const bool residual_fired =
      !plan.labels.empty() && plan.labels.back().from_residual;
  if (residual_fired) residual = 0.0;
  double total_used = 0.0;
  for (double u : used) total_used += u;
  EXPECT_NEAR(total_used + residual, alpha.sum(), 1e-9);
  if (residual == 0.0) {
    for (Eigen::Index u = 0; u < alpha.size(); ++u)
      EXPECT_NEAR(used[static_cast<std::size_t>(u)], alpha(u), 1e-9);
  } else {
    // Every step before the last fire is fully consumed.
    const int boundary = plan.labels.empty() ? 0 : plan.labels.back().last_step();
    for (int u = 0; u < boundary; ++u)
      EXPECT_NEAR(used[static_cast<std::size_t>(u)], alpha(u), 1e-9);
  }
}

TEST(IntegrateAndFire, ThresholdEqualWeights) {
  const Mat h = RandomMat(2, 4, 1);
  Firing f = IntegrateAndFire(h, Vec({1.0, 1.0}), ResidualPolicy::kRound);
  ASSERT_EQ(f.plan.fire_count(), 2);
  EXPECT_EQ(f.embeddings.row(0), h.row(0));
  EXPECT_EQ(f.embeddings.row(1), h.row(1));
  EXPECT_EQ(f.plan.residual, 0.0);
}

TEST(IntegrateAndFire, SplitsWeightAcrossLabels) {
  const Mat h = RandomMat(3, 4, 2);
  Firing f =
      IntegrateAndFire(h, Vec({0.6, 0.6, 0.8}), ResidualPolicy::kDiscard);
  ASSERT_EQ(f.plan.fire_count(), 2);
  EXPECT_EQ(f.plan.labels[0].last_step(), 1);
  EXPECT_EQ(f.plan.labels[1].last_step(), 2);
  const RowVec c1 = 0.6 * h.row(0) + 0.4 * h.row(1);
  const RowVec c2 = 0.2 * h.row(1) + 0.8 * h.row(2);
  EXPECT_LT((f.embeddings.row(0) - c1).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((f.embeddings.row(1) - c2).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(f.plan.labels[1].fractions[0].weight, 0.2, 1e-12);
  EXPECT_NEAR(f.plan.residual, 0.0, 1e-12);
}

TEST(IntegrateAndFire, SmallResidualIsDropped) {
  const Mat h = RandomMat(4, 3, 3);
  Firing f = IntegrateAndFire(h, Vec({0.1, 0.05, 0.2, 0.05}),
                              ResidualPolicy::kRound);
  EXPECT_EQ(f.plan.fire_count(), 0);
  EXPECT_EQ(f.embeddings.rows(), 0);
  EXPECT_NEAR(f.plan.residual, 0.4, 1e-12);
}

TEST(IntegrateAndFire, LargeResidualIsRoundedUp) {
  const Mat h = RandomMat(3, 3, 3);
  Firing f =
      IntegrateAndFire(h, Vec({0.7, 0.7, 0.2}), ResidualPolicy::kRound);
  ASSERT_EQ(f.plan.fire_count(), 2);
  EXPECT_TRUE(f.plan.labels[1].from_residual);
  EXPECT_NEAR(f.plan.residual, 0.6, 1e-12);
  Firing g =
      IntegrateAndFire(h, Vec({0.7, 0.7, 0.2}), ResidualPolicy::kDiscard);
  EXPECT_EQ(g.plan.fire_count(), 1);
}

TEST(IntegrateAndFire, MultiFireFromOneStep) {
  const Mat h = RandomMat(1, 5, 4);
  Firing f = IntegrateAndFire(h, Vec({2.5}), ResidualPolicy::kDiscard);
  ASSERT_EQ(f.plan.fire_count(), 2);
  EXPECT_EQ(f.embeddings.row(0), h.row(0));
  EXPECT_EQ(f.embeddings.row(1), h.row(0));
  EXPECT_DOUBLE_EQ(f.plan.residual, 0.5);
  // Under rounding the half-label residual becomes a third label.
  Firing r = IntegrateAndFire(h, Vec({2.5}), ResidualPolicy::kRound);
  EXPECT_EQ(r.plan.fire_count(), 3);
}

TEST(IntegrateAndFire, ExactTieStartsNextLabelEmpty) {
  const Mat h = RandomMat(3, 2, 5);
  Firing f = IntegrateAndFire(h, Vec({0.5, 0.5, 0.25}),
                              ResidualPolicy::kDiscard);
  ASSERT_EQ(f.plan.fire_count(), 1);
  ASSERT_EQ(f.plan.labels[0].fractions.size(), 2u);
  EXPECT_EQ(f.plan.labels[0].fractions[1].weight, 0.5);
  EXPECT_EQ(f.plan.residual, 0.25);
}

TEST(IntegrateAndFire, RejectsNonFiniteInputsWithStep) {
  const Mat h = RandomMat(3, 2, 6);
  try {
    IntegrateAndFire(h, Vec({0.3, std::nan(""), 0.1}), ResidualPolicy::kRound);
    FAIL();
  } catch (const NumericError &e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
  Mat bad = h;
  bad(2, 1) = std::numeric_limits<double>::infinity();
  try {
    IntegrateAndFire(bad, Vec({0.3, 0.3, 0.1}), ResidualPolicy::kRound);
    FAIL();
  } catch (const NumericError &e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos);
  }
}

TEST(IntegrateAndFire, MatchesBruteForceOnRandomWeights) {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.UniformInt(0, 40));
    const double hi = trial % 5 == 0 ? 2.5 : 1.0;
    const Eigen::VectorXd alpha = RandomWeights(n, 0.0, hi, rng);
    const Reference ref = BruteForce(alpha);
    for (ResidualPolicy policy :
         {ResidualPolicy::kDiscard, ResidualPolicy::kRound}) {
      const FiringPlan plan = PlanFiring(alpha, policy);
      const int extra =
          policy == ResidualPolicy::kRound && ref.residual >= 0.5 ? 1 : 0;
      ASSERT_EQ(plan.fire_count(),
                static_cast<int>(ref.fire_steps.size()) + extra)
          << "trial " << trial;
      for (std::size_t i = 0; i < ref.fire_steps.size(); ++i)
        EXPECT_EQ(plan.labels[i].last_step(), ref.fire_steps[i]);
      EXPECT_NEAR(plan.residual, ref.residual, 1e-9);
      ExpectPlanInvariants(plan, alpha);
    }
  }
}

TEST(IntegrateAndFire, EmbeddingsAreWeightedSums) {
  Rng rng(8);
  const Eigen::VectorXd alpha = RandomWeights(20, 0.05, 0.95, rng);
  const Mat h = RandomMat(20, 6, 9);
  Firing f = IntegrateAndFire(h, alpha, ResidualPolicy::kRound);
  for (int i = 0; i < f.plan.fire_count(); ++i) {
    RowVec expect = RowVec::Zero(6);
    for (const FiringFraction &fr : f.plan.labels[i].fractions)
      expect += fr.weight * h.row(fr.step);
    EXPECT_LT((f.embeddings.row(i) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(IntegrateAndFire, StepCountIsLinear) {
  Rng rng(10);
  for (int u : {7, 50, 333}) {
    Counters().Reset();
    PlanFiring(RandomWeights(u, 0.0, 1.0, rng), ResidualPolicy::kRound);
    const std::uint64_t once = Counters().cif_steps;
    Counters().Reset();
    PlanFiring(RandomWeights(2 * u, 0.0, 1.0, rng), ResidualPolicy::kRound);
    EXPECT_EQ(once, static_cast<std::uint64_t>(u));
    EXPECT_EQ(Counters().cif_steps, 2 * once);
  }
}

TEST(ScaleWeights, ProportionalAndExactSum) {
  EXPECT_EQ(ScaleWeights(Vec({0.5, 0.5}), 2), Vec({1.0, 1.0}));
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd a = RandomWeights(9, 0.01, 1.0, rng);
    EXPECT_NEAR(ScaleWeights(a, 3).sum(), 3.0, 1e-12);
  }
  EXPECT_THROW(ScaleWeights(Vec({0.0, 0.0}), 2), DegenerateWeights);
}

TEST(ScaleWeights, ScaledWeightsFireExactlyTarget) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.UniformInt(0, 30));
    const int s = 1 + static_cast<int>(rng.UniformInt(0, 2 * n));
    const Eigen::VectorXd a = RandomWeights(n, 1e-3, 1.0, rng);
    const Eigen::VectorXd scaled = ScaleWeights(a, s);
    for (ResidualPolicy policy :
         {ResidualPolicy::kDiscard, ResidualPolicy::kRound}) {
      const FiringPlan plan = PlanFiring(scaled, policy);
      EXPECT_EQ(plan.fire_count(), s) << "n=" << n << " s=" << s;
      EXPECT_NEAR(plan.residual, 0.0, 1e-9);
      ExpectPlanInvariants(plan, scaled);
    }
  }
}

TEST(IntegrateAndFireOp, GradientWrtWeightsAndEmbeddings) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 7;
    const double hi = trial % 4 == 0 ? 2.2 : 1.0;
    Eigen::VectorXd alpha = RandomWeights(n, 0.05, hi, rng);
    const Mat h = RandomMat(n, 3, 100 + trial);
    const FiringPlan plan = PlanFiring(alpha, ResidualPolicy::kRound);
    const Mat w = RandomMat(std::max(plan.fire_count(), 1), 3, 200 + trial);
    auto loss = [&](Var c) {
      if (c.rows() == 0) return Sum(Scale(c, 0.0));
      return Sum(Mul(c, c.graph()->Constant(w.topRows(c.rows()))));
    };
    const Mat alpha_col = alpha;
    const double ea = GradCheck(
        [&](Graph &g, Var a) {
          return loss(IntegrateAndFireOp(g.Constant(h), a,
                                         ResidualPolicy::kRound));
        },
        alpha_col, 1e-6);
    EXPECT_LT(ea, 1e-5) << "trial " << trial;
    const double eh = GradCheck(
        [&](Graph &g, Var x) {
          return loss(IntegrateAndFireOp(x, g.Constant(alpha_col),
                                         ResidualPolicy::kRound));
        },
        h, 1e-6);
    EXPECT_LT(eh, 1e-6);
  }
}

TEST(ScaleWeightsOp, Gradient) {
  Rng rng(14);
  const Mat a = RandomWeights(6, 0.1, 0.9, rng);
  const Mat w = RandomMat(6, 1, 15);
  const double err = GradCheck(
      [&](Graph &g, Var x) {
        return Sum(Mul(ScaleWeightsOp(x, 4), g.Constant(w)));
      },
      a);
  EXPECT_LT(err, 1e-6);
}

TEST(ScaledFiring, GradientThroughScaling) {
  Rng rng(16);
  const Mat a = RandomWeights(8, 0.1, 0.9, rng);
  const Mat h = RandomMat(8, 3, 17);
  const Mat w = RandomMat(3, 3, 18);
  const double err = GradCheck(
      [&](Graph &g, Var x) {
        Var c = IntegrateAndFireOp(g.Constant(h), ScaleWeightsOp(x, 3),
                                   ResidualPolicy::kRound);
        return Sum(Mul(c, g.Constant(w)));
      },
      a, 1e-6);
  EXPECT_LT(err, 1e-5);
}

SanConfig SmallConfig() {
  SanConfig c;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.d_feat = 4;
  c.encoder_layers = 2;
  c.decoder_layers = 1;
  c.dropout = 0.0;
  c.vocab.n_labels = 3;
  return c;
}

TEST(WeightPredictor, RangeZeroWeightsAndGradient) {
  SanConfig c = SmallConfig();
  ParameterSet params;
  Rng rng(19);
  WeightPredictor p(params, "p", c, rng);
  const Mat enc = RandomMat(7, c.d_model, 20);
  Eigen::VectorXd alpha = p.Predict(enc);
  ASSERT_EQ(alpha.size(), 7);
  EXPECT_TRUE((alpha.array() > 0.0).all() && (alpha.array() < 1.0).all());

  const Mat w = RandomMat(7, 1, 21);
  auto loss = [&](Graph &g) {
    return Sum(Mul(p.Forward(g, g.Constant(enc), false, nullptr),
                   g.Constant(w)));
  };
  EXPECT_LT(GradCheckParams(loss, params.All()), 1e-4);

  p.projection_weight()->value.setZero();
  p.projection_bias()->value.setZero();
  alpha = p.Predict(enc);
  for (Eigen::Index u = 0; u < alpha.size(); ++u) EXPECT_EQ(alpha(u), 0.5);
}

TEST(CifModel, TrainingForwardEmitsOneRowPerLabel) {
  SanConfig c = SmallConfig();
  CifModel model(c, 22);
  Rng rng(23);
  for (int s : {1, 2, 5, 9}) {
    Graph g;
    std::vector<int> labels;
    for (int i = 0; i < s; ++i) labels.push_back(i % c.vocab.n_labels);
    auto out = model.Forward(g, g.Constant(RandomMat(33, c.d_feat, s)),
                             &labels, true, &rng);
    EXPECT_EQ(out.logits.rows(), s);
    EXPECT_EQ(out.plan.fire_count(), s);
    EXPECT_EQ(out.alpha.rows(), 5);
  }
  Graph g;
  EXPECT_THROW(model.Forward(g, g.Constant(RandomMat(33, c.d_feat, 1)),
                             nullptr, true, &rng),
               ContractError);
}

TEST(CifModel, OracleWeightsRecoverLabelCount) {
  SanConfig c = SmallConfig();
  CifModel model(c, 24);
  EncodedSequence enc = model.encoder().Encode(RandomMat(48, c.d_feat, 25));
  const int u = static_cast<int>(enc.h.rows());
  // One label per encoder step: each step carries (almost) a full unit.
  Eigen::VectorXd oracle(u);
  for (int i = 0; i < u; ++i) oracle(i) = i % 2 == 0 ? 0.97 : 1.02;
  Firing f = IntegrateAndFire(enc.h, oracle, ResidualPolicy::kRound);
  EXPECT_EQ(f.plan.fire_count(), u);

  // Same through the model with the predictor saturated near 1.
  model.params().Find("cif.predictor.out.weight")->value.setZero();
  model.params().Find("cif.predictor.out.bias")->value.setConstant(12.0);
  Graph g(false);
  auto out = model.Forward(g, g.Constant(RandomMat(48, c.d_feat, 25)),
                           nullptr, false, nullptr);
  EXPECT_EQ(out.logits.rows(), u);
}

TEST(CifModel, IncrementalDecoderMatchesTeacherForcing) {
  SanConfig c = SmallConfig();
  c.decoder_layers = 2;
  CifModel model(c, 26);
  const std::vector<int> labels{1, 0, 2, 2};
  Graph g(false);
  auto out = model.Forward(g, g.Constant(RandomMat(40, c.d_feat, 27)), &labels,
                           false, nullptr);
  const Mat c_emb = Integrate(
      out.encoded.value(), out.plan);
  CifDecoderCache cache = model.StartDecoding();
  std::vector<int> prefix;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    RowVec step = model.DecoderStep(prefix, c_emb.row(r), cache);
    EXPECT_LT((step - out.logits.value().row(r)).cwiseAbs().maxCoeff(), 1e-9);
    prefix.push_back(labels[i]);
  }
}

TEST(CifModel, EndToEndGradientOnTwoLabels) {
  SanConfig c = SmallConfig();
  c.encoder_layers = 1;
  CifModel model(c, 28);
  const Mat features = RandomMat(16, c.d_feat, 29);
  const std::vector<int> labels{2, 1};
  Mat onehot = Mat::Zero(2, c.vocab.size());
  onehot(0, 2) = 1.0;
  onehot(1, 1) = 1.0;
  auto loss = [&](Graph &g) {
    auto out = model.Forward(g, g.Constant(features), &labels, false, nullptr);
    Var ce = Scale(Sum(Mul(LogSoftmaxRows(out.logits), g.Constant(onehot))),
                   -1.0);
    Var quantity = Abs(Sub(Sum(out.alpha), g.Constant(Mat::Constant(1, 1, 2.0))));
    return Add(ce, quantity);
  };
  std::vector<Parameter *> probed;
  for (Parameter *p : model.params().All())
    if (!p->name.ends_with("key.bias") && p->name.rfind("ctc", 0) != 0)
      probed.push_back(p);
  EXPECT_LT(GradCheckParams(loss, probed, 1e-5, 6), 1e-4);
}

TEST(Alignment, OneLinePerFiredLabel) {
  const FiringPlan plan =
      PlanFiring(Vec({0.6, 0.6, 0.8, 0.3}), ResidualPolicy::kDiscard);
  std::ostringstream os;
  WriteAlignment(os, "utt1", plan, {4, 7});
  EXPECT_EQ(os.str(), "utt1\t0\t4\t0\t1\t0.3\nutt1\t1\t7\t1\t2\t0.3\n");
}

}  // namespace
}  // namespace syncasr
