// syncasr/cif.cc

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

#include "syncasr/cif.h"

#include <cmath>
#include <memory>
#include <ostream>

namespace syncasr {

double FiredLabel::total() const {
  double s = 0.0;
  for (const FiringFraction &f : fractions) s += f.weight;
  return s;
}

FiringPlan PlanFiring(const Eigen::Ref<const Eigen::VectorXd> &alpha,
                      ResidualPolicy policy) {
  const int n = static_cast<int>(alpha.size());
  FiringPlan plan;
  plan.steps = n;
  Counters().cif_steps += static_cast<std::uint64_t>(n);

  FiredLabel current;
  double a = 0.0;
  // d(a)/d(alpha) is the indicator of steps [a_lo, u - 1] (empty when
  // a_lo > u - 1, i.e. the label started empty or within step u).
  int a_lo = 0;
  for (int u = 0; u < n; ++u) {
    if (!std::isfinite(alpha(u)))
      throw NumericError("non-finite firing weight at step " +
                         std::to_string(u));
    if (alpha(u) < 0.0)
      throw ContractError("negative firing weight at step " +
                          std::to_string(u));
    // Unassigned part of alpha_u; its derivative is the indicator of
    // [r_lo, u].
    double remaining = alpha(u);
    int r_lo = u;
    while (true) {
      const bool a_has_grad = a_lo <= u - 1;
      if (a + remaining < kFireThreshold - kFireTolerance) {
        current.fractions.push_back({u, remaining, 1, r_lo, u});
        if (!a_has_grad) a_lo = r_lo;
        a += remaining;
        break;
      }
      const double need = kFireThreshold - a;
      current.fractions.push_back(a_has_grad
                                      ? FiringFraction{u, need, -1, a_lo, u - 1}
                                      : FiringFraction{u, need, 0, 0, -1});
      plan.labels.push_back(std::move(current));
      current = FiredLabel();
      if (a_has_grad) r_lo = a_lo;
      remaining -= need;
      a = 0.0;
      a_lo = u + 1;
      if (remaining <= 0.0) break;  // tie: next label starts at step u + 1
    }
  }
  plan.residual = a;
  if (policy == ResidualPolicy::kRound && a >= 0.5) {
    current.from_residual = true;
    plan.labels.push_back(std::move(current));
  }
  return plan;
}

Firing IntegrateAndFire(const Mat &h,
                        const Eigen::Ref<const Eigen::VectorXd> &alpha,
                        ResidualPolicy policy) {
  if (h.rows() != alpha.size())
    throw DimensionError("integrate_and_fire: h " + ShapeString(h) + " vs " +
                         std::to_string(alpha.size()) + " weights");
  for (Eigen::Index u = 0; u < h.rows(); ++u)
    if (!h.row(u).allFinite())
      throw NumericError("non-finite encoder output at step " +
                         std::to_string(u));
  Firing out;
  out.plan = PlanFiring(alpha, policy);
  out.embeddings = Integrate(h, out.plan);
  out.alpha = alpha;
  return out;
}

Eigen::VectorXd ScaleWeights(const Eigen::Ref<const Eigen::VectorXd> &alpha,
                             int target) {
  const double sum = alpha.sum();
  if (sum == 0.0) throw DegenerateWeights("scale_weights: weights sum to 0");
  if (!std::isfinite(sum)) throw NumericError("scale_weights: non-finite sum");
  return alpha * (static_cast<double>(target) / sum);
}

Var ScaleWeightsOp(Var alpha, int target) {
  if (alpha.cols() != 1)
    throw DimensionError("scale_weights expects a column, got " +
                         ShapeString(alpha.value()));
  const Eigen::VectorXd a = alpha.value().col(0);
  const double sum = a.sum();
  Mat y = ScaleWeights(a, target);
  const double s = static_cast<double>(target);
  const std::size_t in = alpha.id();
  return alpha.graph()->Emit(
      std::move(y), {alpha}, [in, a, sum, s](Graph &g, std::size_t self) {
        const Mat &gy = g.OutputGrad(self);
        const double dot = gy.col(0).dot(a);
        g.GradBuffer(in).array() += (s / sum) * gy.array() - s * dot / (sum * sum);
      });
}

Var IntegrateAndFireOp(Var h, Var alpha, ResidualPolicy policy,
                       FiringPlan *plan_out) {
  if (alpha.cols() != 1 || alpha.rows() != h.rows())
    throw DimensionError("integrate_and_fire: h " + ShapeString(h.value()) +
                         " vs weights " + ShapeString(alpha.value()));
  Firing f = IntegrateAndFire(h.value(), alpha.value().col(0), policy);
  if (plan_out != nullptr) *plan_out = f.plan;
  const std::size_t hid = h.id(), aid = alpha.id();
  auto plan = std::make_shared<FiringPlan>(std::move(f.plan));
  Graph *graph = h.graph();
  return graph->Emit(
      std::move(f.embeddings), {h, alpha},
      [hid, aid, plan](Graph &g, std::size_t self) {
        const Mat &gc = g.OutputGrad(self);
        const Mat &hv = g.Value(hid);
        const bool need_h = g.RequiresGrad(hid), need_a = g.RequiresGrad(aid);
        const Eigen::Index n = hv.rows();
        Eigen::VectorXd diff = Eigen::VectorXd::Zero(n + 1);
        for (std::size_t i = 0; i < plan->labels.size(); ++i) {
          const auto gi = gc.row(static_cast<Eigen::Index>(i));
          for (const FiringFraction &fr : plan->labels[i].fractions) {
            if (need_h) g.GradBuffer(hid).row(fr.step) += fr.weight * gi;
            if (need_a && fr.grad_sign != 0 && fr.grad_lo <= fr.grad_hi) {
              const double gf = fr.grad_sign * gi.dot(hv.row(fr.step));
              diff(fr.grad_lo) += gf;
              diff(fr.grad_hi + 1) -= gf;
            }
          }
        }
        if (need_a) {
          Mat &ga = g.GradBuffer(aid);
          double run = 0.0;
          for (Eigen::Index k = 0; k < n; ++k) {
            run += diff(k);
            ga(k, 0) += run;
          }
        }
      });
}

void WriteAlignment(std::ostream &os, const std::string &utt_id,
                    const FiringPlan &plan, const std::vector<int> &labels) {
  for (std::size_t i = 0; i < plan.labels.size(); ++i) {
    const FiredLabel &l = plan.labels[i];
    os << utt_id << '\t' << i << '\t';
    if (i < labels.size())
      os << labels[i];
    else
      os << '-';
    os << '\t' << l.first_step() << '\t' << l.last_step() << '\t'
       << plan.residual << '\n';
  }
}

// ---------------------------------------------------------------------------

WeightPredictor::WeightPredictor(ParameterSet &params, const std::string &name,
                                 const SanConfig &config, Rng &rng)
    : dropout_(config.dropout) {
  const int d = config.d_model;
  kernel_ = &params.Add(name + ".conv.kernel", XavierUniform(3 * d, d, rng));
  conv_bias_ = &params.Add(name + ".conv.bias", Mat::Zero(1, d));
  ln_ = LayerNormalization(params, name + ".ln", d);
  out_ = Linear(params, name + ".out", d, 1, rng);
}

Var WeightPredictor::Forward(Graph &g, Var encoded, bool train,
                             Rng *rng) const {
  Var x = Conv1d(encoded, g.Param(*kernel_), g.Param(*conv_bias_), 3, 1,
                 Padding::kSame);
  x = Relu(ln_.Forward(g, x));
  if (train && rng != nullptr) x = Dropout(x, dropout_, *rng);
  return Sigmoid(out_.Forward(g, x));
}

Eigen::VectorXd WeightPredictor::Predict(const Mat &encoded) const {
  Graph g(false);
  return Forward(g, g.Constant(encoded), false, nullptr).value().col(0);
}

// ---------------------------------------------------------------------------

CifModel::CifModel(const SanConfig &config, std::uint64_t seed)
    : config_(config) {
  config_.Validate();
  Rng rng = Rng(seed).Derive("init");
  const int d = config_.d_model, vocab = config_.vocab.size();
  encoder_ = Encoder(params_, "encoder", config_, rng);
  ctc_head_ = Linear(params_, "ctc", d, vocab, rng);
  predictor_ = WeightPredictor(params_, "cif.predictor", config_, rng);
  embedding_ = &params_.Add("decoder.embedding", Gaussian(vocab, d, 1.0, rng));
  input_ = Linear(params_, "decoder.input", 2 * d, d, rng);
  decoder_ = DecoderStack(params_, "decoder", config_, config_.decoder_layers,
                          false, rng);
  output_ = Linear(params_, "decoder.output", 2 * d, vocab, rng);
}

Var CifModel::CtcLogits(Graph &g, Var encoded) const {
  return ctc_head_.Forward(g, encoded);
}

Var CifModel::DecoderLogits(Graph &g, Var embeddings,
                            const std::vector<int> &inputs, bool train,
                            Rng *rng) const {
  if (static_cast<Eigen::Index>(inputs.size()) != embeddings.rows())
    throw DimensionError("cif decoder: " + std::to_string(inputs.size()) +
                         " inputs for " + ShapeString(embeddings.value()) +
                         " embeddings");
  Var e = GatherRows(g.Param(*embedding_), inputs);
  Var x = input_.Forward(g, ConcatCols({e, embeddings}));
  Var s = decoder_.Forward(g, x, Var(), train, rng);
  return output_.Forward(g, ConcatCols({s, embeddings}));
}

CifModel::Outputs CifModel::Forward(Graph &g, Var features,
                                    const std::vector<int> *labels, bool train,
                                    Rng *rng,
                                    const std::vector<int> *decoder_inputs) const {
  if (train && labels == nullptr)
    throw ContractError("CIF training forward needs reference labels");
  Outputs o;
  o.encoded = encoder_.Forward(g, features, train, rng);
  o.alpha = predictor_.Forward(g, o.encoded, train, rng);
  o.ctc_logits = CtcLogits(g, o.encoded);
  if (labels != nullptr) {
    const int s = static_cast<int>(labels->size());
    if (s == 0) throw ContractError("CIF forward with an empty label sequence");
    Var scaled = ScaleWeightsOp(o.alpha, s);
    Var c = IntegrateAndFireOp(o.encoded, scaled, ResidualPolicy::kRound,
                               &o.plan);
    if (c.rows() != s)
      throw NumericError("scaled weights fired " + std::to_string(c.rows()) +
                         " labels, expected " + std::to_string(s));
    std::vector<int> inputs;
    if (decoder_inputs != nullptr) {
      inputs = *decoder_inputs;
    } else {
      inputs.push_back(config_.vocab.eos());
      inputs.insert(inputs.end(), labels->begin(), labels->end() - 1);
    }
    o.logits = DecoderLogits(g, c, inputs, train, rng);
    return o;
  }
  Var c = IntegrateAndFireOp(o.encoded, o.alpha, ResidualPolicy::kRound,
                             &o.plan);
  const Mat &cv = c.value();
  Mat logits(cv.rows(), config_.vocab.size());
  CifDecoderCache cache = StartDecoding();
  std::vector<int> prefix;
  for (Eigen::Index i = 0; i < cv.rows(); ++i) {
    logits.row(i) = DecoderStep(prefix, cv.row(i), cache);
    Eigen::Index best = 0;
    logits.row(i).head(config_.vocab.n_labels).maxCoeff(&best);
    prefix.push_back(static_cast<int>(best));
  }
  o.logits = g.Constant(std::move(logits));
  return o;
}

Firing CifModel::Fire(const EncodedSequence &enc) const {
  return IntegrateAndFire(enc.h, predictor_.Predict(enc.h),
                          ResidualPolicy::kRound);
}

CifDecoderCache CifModel::StartDecoding() const {
  return CifDecoderCache{decoder_.Start(nullptr)};
}

RowVec CifModel::DecoderStep(const std::vector<int> &prefix,
                             const RowVec &embedding,
                             CifDecoderCache &cache) const {
  if (static_cast<std::size_t>(cache.stack.length) != prefix.size())
    throw ContractError("decoder cache holds " +
                        std::to_string(cache.stack.length) +
                        " positions but the prefix has " +
                        std::to_string(prefix.size()) + " labels");
  const int input = prefix.empty() ? config_.vocab.eos() : prefix.back();
  if (input < 0 || input >= config_.vocab.size())
    throw std::out_of_range("label " + std::to_string(input) +
                            " outside vocabulary");
  const int d = config_.d_model;
  RowVec x(2 * d);
  x << embedding_->value.row(input), embedding;
  const RowVec s = decoder_.Step(input_.Apply(x).row(0), cache.stack);
  RowVec y(2 * d);
  y << s, embedding;
  return output_.Apply(y).row(0);
}

}  // namespace syncasr
