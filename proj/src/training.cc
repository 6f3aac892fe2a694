// syncasr/training.cc

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

#include "syncasr/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace syncasr {

namespace fs = std::filesystem;

void LossWeights::Validate() const {
  if (ctc < 0.0) throw ContractError("LossWeights.ctc must be >= 0");
  if (quantity < 0.0) throw ContractError("LossWeights.quantity must be >= 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ContractError("LossWeights.label_smoothing must be in [0, 1)");
}

void TrainConfig::Validate() const {
  auto fail = [](const std::string &field, const std::string &why) {
    throw ContractError("TrainConfig." + field + ": " + why);
  };
  if (warmup < 1) fail("warmup", "must be >= 1");
  if (!(lr_k > 0.0)) fail("lr_k", "must be positive");
  if (sampling_rate < 0.0 || sampling_rate > 1.0)
    fail("sampling_rate", "must be in [0, 1]");
  if (augment.freq_width < 0 || augment.freq_masks < 0 ||
      augment.time_width < 0 || augment.time_masks < 0)
    fail("augment", "widths and counts must be >= 0");
  if (augment.time_ratio < 0.0 || augment.time_ratio > 1.0)
    fail("augment.time_ratio", "must be in [0, 1]");
  if (batch_frames < 1) fail("batch_frames", "must be >= 1");
  if (batch_labels < 1) fail("batch_labels", "must be >= 1");
  if (max_steps < 1) fail("max_steps", "must be >= 1");
  if (checkpoint_every < 1) fail("checkpoint_every", "must be >= 1");
  if (keep_checkpoints < 1) fail("keep_checkpoints", "must be >= 1");
  if (average_count < 1) fail("average_count", "must be >= 1");
}

double NoamLr(int step, int d_model, int warmup, double k) {
  if (step < 1) throw ContractError("NoamLr needs step >= 1");
  const double s = static_cast<double>(step);
  return k / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(warmup, -1.5));
}

std::vector<int> ScheduledSamplingMix(const std::vector<int> &refs,
                                      const std::vector<int> &preds,
                                      double rate, Rng &rng) {
  if (refs.size() != preds.size())
    throw DimensionError("scheduled sampling: " + std::to_string(refs.size()) +
                         " references vs " + std::to_string(preds.size()) +
                         " predictions");
  std::vector<int> out(refs);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (rng.Uniform() < rate) out[i] = preds[i];
  return out;
}

Mat SpecAugment(const Mat &features, const SpecAugmentConfig &config,
                Rng &rng) {
  Mat out = features;
  if (!config.enabled) return out;
  const int frames = static_cast<int>(features.rows());
  const int dims = static_cast<int>(features.cols());
  for (int m = 0; m < config.freq_masks; ++m) {
    const int width = std::min(rng.UniformInt(0, config.freq_width), dims);
    const int start = rng.UniformInt(0, dims - width);
    out.middleCols(start, width).setZero();
  }
  const int cap = std::min(
      config.time_width,
      static_cast<int>(std::floor(config.time_ratio * frames)));
  for (int m = 0; m < config.time_masks; ++m) {
    const int width = rng.UniformInt(0, std::max(cap, 0));
    const int start = rng.UniformInt(0, frames - width);
    out.middleRows(start, width).setZero();
  }
  return out;
}

// ---------------------------------------------------------------------------

Adam::Adam(ParameterSet &params, const AdamConfig &config)
    : params_(&params), config_(config) {
  for (const Parameter *p : params.All()) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::Step(double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, steps_);
  const double c2 = 1.0 - std::pow(config_.beta2, steps_);
  auto params = params_->All();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter &p = *params[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] +
            (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / c1) /
                       ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

std::vector<NamedTensor> Adam::State() const {
  std::vector<NamedTensor> out;
  auto params = static_cast<const ParameterSet *>(params_)->All();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::vector<std::uint32_t> dims{
        static_cast<std::uint32_t>(m_[i].rows()),
        static_cast<std::uint32_t>(m_[i].cols())};
    out.push_back({"adam.m/" + params[i]->name, dims, m_[i]});
    out.push_back({"adam.v/" + params[i]->name, dims, v_[i]});
  }
  out.push_back({"adam.steps", {1}, Mat::Constant(1, 1, steps_)});
  return out;
}

void Adam::LoadState(const std::vector<NamedTensor> &tensors) {
  auto find = [&](const std::string &name) -> const Mat & {
    for (const NamedTensor &t : tensors)
      if (t.name == name) return t.value;
    throw FormatError("checkpoint is missing optimizer state " + name);
  };
  auto params = params_->All();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat &m = find("adam.m/" + params[i]->name);
    const Mat &v = find("adam.v/" + params[i]->name);
    if (m.rows() != m_[i].rows() || m.cols() != m_[i].cols() ||
        v.rows() != v_[i].rows() || v.cols() != v_[i].cols())
      throw DimensionError("optimizer state shape mismatch for " +
                           params[i]->name);
    m_[i] = m;
    v_[i] = v;
  }
  steps_ = static_cast<int>(find("adam.steps")(0, 0));
}

// ---------------------------------------------------------------------------

UtteranceRngs UtteranceRngs::For(std::uint64_t seed, int step, int position) {
  const Rng master(seed);
  const std::uint64_t index =
      (static_cast<std::uint64_t>(step) << 20) ^
      static_cast<std::uint64_t>(position);
  return UtteranceRngs{master.Derive("augment", index),
                       master.Derive("sampling", index),
                       master.Derive("dropout", index)};
}

namespace {

std::vector<int> ArgmaxLabels(const Mat &logits, int n_labels) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).head(n_labels).maxCoeff(&best);
    out.push_back(static_cast<int>(best));
  }
  return out;
}

// The start symbol followed by the labels (all of them when the targets end
// with end-of-sentence, all but the last otherwise), each optionally replaced
// by the model's own prediction at the preceding position.
std::vector<int> DecoderInputs(const std::vector<int> &labels, int eos,
                               bool through_last, const std::vector<int> *preds,
                               double rate, Rng *rng) {
  std::vector<int> shifted(labels.begin(), through_last || labels.empty()
                                               ? labels.end()
                                               : labels.end() - 1);
  if (preds != nullptr && rate > 0.0 && !shifted.empty()) {
    std::vector<int> p(preds->begin(), preds->begin() + shifted.size());
    shifted = ScheduledSamplingMix(shifted, p, rate, *rng);
  }
  std::vector<int> inputs{eos};
  inputs.insert(inputs.end(), shifted.begin(), shifted.end());
  return inputs;
}

LossParts Finish(Graph &g, Var total, LossParts parts, double grad_scale) {
  parts.total = total.scalar();
  if (grad_scale > 0.0 && std::isfinite(parts.total))
    g.Backward(Scale(total, grad_scale));
  return parts;
}

// Adds lambda * CTC when the reference fits in the encoder output.
Var AddCtc(Var total, Var ctc_logits, const std::vector<int> &labels,
           const Vocab &vocab, double lambda, LossParts &parts) {
  if (lambda <= 0.0 || ctc_logits.rows() < CtcMinFrames(labels)) return total;
  Var ctc = CtcLoss(ctc_logits, labels, vocab.blank());
  parts.ctc = ctc.scalar();
  return Add(total, Scale(ctc, lambda));
}

}  // namespace

LossParts TransformerLoss(const TransformerModel &model,
                          const TrainExample &ex, const LossWeights &weights,
                          const TrainConfig &config, UtteranceRngs &rngs,
                          bool train, double grad_scale) {
  const Vocab &vocab = model.config().vocab;
  Graph g(grad_scale > 0.0);
  const Mat feats =
      train ? SpecAugment(ex.features, config.augment, rngs.augment)
            : ex.features;
  Rng *dropout = train ? &rngs.dropout : nullptr;
  Var enc = model.encoder().Forward(g, g.Constant(feats), train, dropout);

  std::vector<int> targets = ex.labels;
  targets.push_back(vocab.eos());
  std::vector<int> inputs =
      DecoderInputs(ex.labels, vocab.eos(), true, nullptr, 0.0, nullptr);
  if (train && config.sampling_rate > 0.0 && !ex.labels.empty()) {
    Graph probe(false);
    Var logits = model.DecoderLogits(probe, probe.Constant(enc.value()),
                                     inputs, false, nullptr);
    const std::vector<int> preds =
        ArgmaxLabels(logits.value(), vocab.n_labels);
    inputs = DecoderInputs(ex.labels, vocab.eos(), true, &preds,
                           config.sampling_rate, &rngs.sampling);
  }
  Var logits = model.DecoderLogits(g, enc, inputs, train, dropout);
  LossParts parts;
  Var ce = CrossEntropySmoothed(logits, targets, weights.label_smoothing,
                                vocab.pad());
  parts.ce = ce.scalar();
  Var total = AddCtc(ce, model.CtcLogits(g, enc), ex.labels, vocab,
                     weights.ctc, parts);
  return Finish(g, total, parts, grad_scale);
}

LossParts CifLoss(const CifModel &model, const TrainExample &ex,
                  const LossWeights &weights, const TrainConfig &config,
                  UtteranceRngs &rngs, bool train, double grad_scale) {
  const Vocab &vocab = model.config().vocab;
  if (ex.labels.empty())
    throw ContractError("CIF training example " + ex.id + " has no labels");
  Graph g(grad_scale > 0.0);
  const Mat feats =
      train ? SpecAugment(ex.features, config.augment, rngs.augment)
            : ex.features;
  Rng *dropout = train ? &rngs.dropout : nullptr;
  Var enc = model.encoder().Forward(g, g.Constant(feats), train, dropout);
  Var alpha = model.predictor().Forward(g, enc, train, dropout);
  const int s = static_cast<int>(ex.labels.size());
  Var c = IntegrateAndFireOp(enc, ScaleWeightsOp(alpha, s),
                             ResidualPolicy::kRound);
  if (c.rows() != s)
    throw NumericError("scaled weights fired " + std::to_string(c.rows()) +
                       " labels for " + std::to_string(s) + " references");

  std::vector<int> inputs =
      DecoderInputs(ex.labels, vocab.eos(), false, nullptr, 0.0, nullptr);
  if (train && config.sampling_rate > 0.0 && s > 1) {
    Graph probe(false);
    Var logits = model.DecoderLogits(probe, probe.Constant(c.value()), inputs,
                                     false, nullptr);
    const std::vector<int> preds =
        ArgmaxLabels(logits.value(), vocab.n_labels);
    inputs = DecoderInputs(ex.labels, vocab.eos(), false, &preds,
                           config.sampling_rate, &rngs.sampling);
  }
  Var logits = model.DecoderLogits(g, c, inputs, train, dropout);
  LossParts parts;
  Var ce = CrossEntropySmoothed(logits, ex.labels, weights.label_smoothing,
                                vocab.pad());
  parts.ce = ce.scalar();
  Var total = AddCtc(ce, model.CtcLogits(g, enc), ex.labels, vocab,
                     weights.ctc, parts);
  Var quantity = QuantityLoss(alpha, s);
  parts.quantity = quantity.scalar();
  if (weights.quantity > 0.0)
    total = Add(total, Scale(quantity, weights.quantity));
  return Finish(g, total, parts, grad_scale);
}

LossParts LmLoss(const SanLm &lm, const TrainExample &ex,
                 const LossWeights &weights, UtteranceRngs &rngs, bool train,
                 double grad_scale) {
  const Vocab &vocab = lm.config().vocab;
  Graph g(grad_scale > 0.0);
  std::vector<int> inputs{vocab.eos()};
  inputs.insert(inputs.end(), ex.labels.begin(), ex.labels.end());
  std::vector<int> targets = ex.labels;
  targets.push_back(vocab.eos());
  Var logits = lm.Logits(g, inputs, train, train ? &rngs.dropout : nullptr);
  LossParts parts;
  Var ce = CrossEntropySmoothed(logits, targets, weights.label_smoothing,
                                vocab.pad());
  parts.ce = ce.scalar();
  return Finish(g, ce, parts, grad_scale);
}

// ---------------------------------------------------------------------------

void WriteLossCsv(const std::string &path,
                  const std::vector<LossRecord> &records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "step,lr,total,ce,ctc,quantity\n";
  char buf[256];
  for (const LossRecord &r : records) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.step, r.lr, r.loss.total, r.loss.ce, r.loss.ctc,
                  r.loss.quantity);
    os << buf;
  }
}

std::vector<LossRecord> ReadLossCsv(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(is, line);
  if (line != "step,lr,total,ce,ctc,quantity")
    throw FormatError(path + ": unexpected loss CSV header");
  std::vector<LossRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    LossRecord r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &r.step, &r.lr,
                    &r.loss.total, &r.loss.ce, &r.loss.ctc,
                    &r.loss.quantity) != 6)
      throw FormatError(path + ": malformed line " + std::to_string(lineno));
    out.push_back(r);
  }
  return out;
}

std::vector<std::vector<int>> MakeBatches(const std::vector<int> &lengths,
                                          int budget) {
  std::vector<int> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return lengths[a] < lengths[b]; });
  std::vector<std::vector<int>> batches;
  std::vector<int> current;
  int used = 0;
  for (int i : order) {
    if (!current.empty() && used + lengths[i] > budget) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    current.push_back(i);
    used += lengths[i];
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

std::vector<NamedTensor> ModelTensors(const std::vector<NamedTensor> &state) {
  std::vector<NamedTensor> out;
  for (const NamedTensor &t : state)
    if (t.name.rfind("adam.", 0) != 0 && t.name.rfind("train.", 0) != 0)
      out.push_back(t);
  return out;
}

std::vector<std::string> ListCheckpoints(const std::string &dir) {
  std::vector<std::pair<int, std::string>> found;
  if (!fs::is_directory(dir)) return {};
  for (const auto &entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    int step = 0;
    char tail[8] = {};
    if (std::sscanf(name.c_str(), "ckpt-%d.%4s", &step, tail) == 2 &&
        std::string(tail) == "bin")
      found.emplace_back(step, entry.path().string());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto &f : found) out.push_back(f.second);
  return out;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(ParameterSet &params, int d_model, TrainConfig config,
                 UtteranceLoss loss)
    : params_(&params),
      d_model_(d_model),
      config_(std::move(config)),
      loss_(std::move(loss)),
      adam_(params, config_.adam) {
  config_.Validate();
}

std::vector<NamedTensor> Trainer::State() const {
  std::vector<NamedTensor> state = Snapshot(*params_);
  for (NamedTensor &t : adam_.State()) state.push_back(std::move(t));
  state.push_back({"train.step", {1}, Mat::Constant(1, 1, step_)});
  return state;
}

void Trainer::Resume(const std::string &checkpoint) {
  const std::vector<NamedTensor> state = ReadCheckpoint(checkpoint);
  Restore(*params_, state);
  adam_.LoadState(state);
  for (const NamedTensor &t : state)
    if (t.name == "train.step") {
      step_ = static_cast<int>(t.value(0, 0));
      return;
    }
  throw FormatError(checkpoint + ": not a training checkpoint (no step)");
}

std::vector<LossRecord> Trainer::Run(
    const std::vector<TrainExample> &data, const std::vector<int> &lengths,
    int budget, const std::string &out_dir,
    const std::function<void(const LossRecord &)> &progress) {
  if (data.empty()) throw ContractError("training corpus is empty");
  if (lengths.size() != data.size())
    throw DimensionError("one batching length per example required");
  const std::vector<std::vector<int>> batches = MakeBatches(lengths, budget);
  const int n_batches = static_cast<int>(batches.size());

  std::vector<LossRecord> records;
  std::string csv, ckpt_dir;
  if (!out_dir.empty()) {
    ckpt_dir = (fs::path(out_dir) / "checkpoints").string();
    fs::create_directories(ckpt_dir);
    csv = (fs::path(out_dir) / "loss.csv").string();
    if (step_ > 0 && fs::exists(csv))
      for (const LossRecord &r : ReadLossCsv(csv))
        if (r.step <= step_) records.push_back(r);
  }
  auto save = [&]() {
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt-%06d.bin", step_);
    WriteCheckpoint((fs::path(ckpt_dir) / name).string(), State());
    std::vector<std::string> all = ListCheckpoints(ckpt_dir);
    for (std::size_t i = 0;
         i + static_cast<std::size_t>(config_.keep_checkpoints) < all.size();
         ++i)
      fs::remove(all[i]);
    WriteLossCsv(csv, records);
  };

  std::vector<int> order;
  int order_epoch = -1;
  while (step_ < config_.max_steps) {
    const int step = step_ + 1;
    const int epoch = (step - 1) / n_batches;
    if (epoch != order_epoch) {
      order.resize(static_cast<std::size_t>(n_batches));
      std::iota(order.begin(), order.end(), 0);
      Rng rng = Rng(config_.seed).Derive("order", static_cast<std::uint64_t>(epoch));
      for (int i = n_batches - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(rng.UniformInt(0, i))]);
      order_epoch = epoch;
    }
    const std::vector<int> &batch =
        batches[static_cast<std::size_t>(order[(step - 1) % n_batches])];

    params_->ZeroGrad();
    LossRecord rec;
    rec.step = step;
    rec.lr = NoamLr(step, d_model_, config_.warmup, config_.lr_k);
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
      UtteranceRngs rngs =
          UtteranceRngs::For(config_.seed, step, static_cast<int>(j));
      const TrainExample &ex = data[static_cast<std::size_t>(batch[j])];
      const LossParts p = loss_(ex, rngs, scale);
      if (!std::isfinite(p.total))
        throw DivergenceError(step, "non-finite loss at step " +
                                        std::to_string(step) + " (utterance " +
                                        ex.id + ")");
      rec.loss.total += scale * p.total;
      rec.loss.ce += scale * p.ce;
      rec.loss.ctc += scale * p.ctc;
      rec.loss.quantity += scale * p.quantity;
    }
    for (const Parameter *p : params_->All())
      if (!p->grad.allFinite())
        throw DivergenceError(step, "non-finite gradient for " + p->name +
                                        " at step " + std::to_string(step));
    adam_.Step(rec.lr);
    step_ = step;
    records.push_back(rec);
    if (progress) progress(rec);
    if (!out_dir.empty() && step_ % config_.checkpoint_every == 0) save();
  }

  if (!out_dir.empty()) {
    std::vector<std::string> all = ListCheckpoints(ckpt_dir);
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt-%06d.bin", step_);
    if (all.empty() || fs::path(all.back()).filename() != name) {
      save();
      all = ListCheckpoints(ckpt_dir);
    }
    WriteLossCsv(csv, records);
    const std::size_t k = std::min(all.size(),
                                   static_cast<std::size_t>(config_.average_count));
    std::vector<std::vector<NamedTensor>> newest;
    for (std::size_t i = all.size() - k; i < all.size(); ++i)
      newest.push_back(ModelTensors(ReadCheckpoint(all[i])));
    WriteCheckpoint((fs::path(out_dir) / "final.avg.bin").string(),
                    AverageCheckpoints(newest));
  }
  return records;
}

}  // namespace syncasr
