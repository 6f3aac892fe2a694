// tools/syncasr.cc

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

// Command-line driver: gen-corpus, train, decode, stress, bench-rtf, report.
// Exit status: 0 success, 2 validation error, 3 runtime or numeric error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "syncasr/experiment.h"
#include "syncasr/metrics.h"
#include "syncasr/stress.h"

namespace fs = std::filesystem;
using namespace syncasr;

namespace {

constexpr int kValidationError = 2;
constexpr int kRuntimeError = 3;

void Archive(const std::string &src, const fs::path &dir,
             const std::string &name) {
  fs::create_directories(dir);
  const fs::path dst = dir / name;
  if (fs::exists(dst) && fs::equivalent(src, dst)) return;
  fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
}

std::vector<std::string> Split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

template <typename T>
std::vector<T> SplitNumbers(const std::string &s, const std::string &what) {
  std::vector<T> out;
  for (const std::string &item : Split(s, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof())
      throw ContractError(what + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void PrintStats(const std::string &split, const std::vector<Utterance> &utts) {
  long frames = 0, labels = 0;
  for (const Utterance &u : utts) {
    frames += u.features.rows();
    labels += static_cast<long>(u.labels.size());
  }
  const double n = static_cast<double>(std::max<std::size_t>(utts.size(), 1));
  std::printf("%s: %zu utterances, %ld frames (%.1f per utterance), %.2f "
              "labels per utterance\n",
              split.c_str(), utts.size(), frames, frames / n, labels / n);
}

// ---------------------------------------------------------------------------

struct GenCorpusArgs {
  std::string spec, out;
  int n_train = 1000, n_test = 200;
  std::int64_t seed = -1;
};

int GenCorpus(const GenCorpusArgs &a) {
  if (a.n_train < 1) throw ContractError("--n-train must be >= 1");
  if (a.n_test < 1) throw ContractError("--n-test must be >= 1");
  CorpusSpec spec = a.spec.empty() ? CorpusSpec{} : LoadCorpusSpec(a.spec);
  if (a.seed >= 0) spec.seed = static_cast<std::uint64_t>(a.seed);
  spec.Validate();
  fs::create_directories(a.out);
  if (!a.spec.empty()) Archive(a.spec, a.out, "corpus.ini");
  for (const auto &[split, n] : {std::pair{"train", a.n_train}, {"test", a.n_test}}) {
    const auto utts = GenerateCorpus(spec, n, split);
    WriteSplit(a.out, split, utts);
    PrintStats(split, utts);
  }
  return 0;
}

struct TrainArgs {
  std::string config, resume;
};

int Train(const TrainArgs &a) {
  const ExperimentConfig config = LoadExperimentConfig(a.config);
  config.Validate(true);
  if (config.out_dir.empty())
    throw ContractError("experiment.out_dir: required for training");
  Archive(a.config, config.out_dir, "config.ini");
  try {
    const TrainSummary s = RunTraining(config, a.resume, [](const LossRecord &r) {
      if (r.step % 50 == 0)
        std::fprintf(stderr, "step %d lr %.6f loss %.4f (ce %.4f ctc %.4f qua %.4f)\n",
                     r.step, r.lr, r.loss.total, r.loss.ce, r.loss.ctc,
                     r.loss.quantity);
    });
    std::printf("trained %d steps in %.1f s; averaged model %s\n", s.steps,
                s.wall_s, s.final_checkpoint.c_str());
  } catch (const DivergenceError &e) {
    std::fprintf(stderr, "training diverged at step %d: %s\n", e.step(),
                 e.what());
    return kRuntimeError;
  }
  return 0;
}

struct LoadedModel {
  ExperimentConfig config;
  std::unique_ptr<AsrModel> model;
};

LoadedModel LoadModel(const std::string &config_path,
                      const std::string &checkpoint) {
  LoadedModel m;
  m.config = LoadExperimentConfig(config_path);
  m.model = std::make_unique<AsrModel>(m.config);
  const std::string ckpt =
      checkpoint.empty()
          ? (fs::path(m.config.out_dir) / "final.avg.bin").string()
          : checkpoint;
  if (!fs::exists(ckpt)) throw ContractError("checkpoint " + ckpt + " not found");
  m.model->Load(ckpt);
  return m;
}

LoadedModel LoadModelDir(const std::string &dir) {
  return LoadModel((fs::path(dir) / "config.ini").string(),
                   (fs::path(dir) / "final.avg.bin").string());
}

struct DecodeArgs {
  std::string config, checkpoint, manifest, out, lm_dir;
  double gamma = -1.0;
  int nbest = 0;
};

int Decode(const DecodeArgs &a) {
  LoadedModel m = LoadModel(a.config, a.checkpoint);
  if (m.config.kind == ModelKind::kLm)
    throw ContractError("experiment.kind: lm cannot decode audio");
  const std::string manifest =
      a.manifest.empty() ? m.config.test_manifest : a.manifest;
  if (manifest.empty()) throw ContractError("no manifest to decode");
  const double gamma = a.gamma >= 0.0 ? a.gamma : m.config.decode.gamma;
  const int nbest = a.nbest > 0 ? a.nbest : m.config.decode.nbest;
  LoadedModel lm;
  if (gamma > 0.0) {
    if (a.lm_dir.empty()) throw ContractError("--gamma > 0 needs --lm");
    lm = LoadModelDir(a.lm_dir);
    if (lm.config.kind != ModelKind::kLm)
      throw ContractError(a.lm_dir + " does not hold a language model");
  }
  const auto utts = LoadManifest(manifest);
  CheckVocabulary(utts, m.model->config().vocab);
  const fs::path out =
      a.out.empty() ? fs::path(m.config.out_dir) / "decode" : fs::path(a.out);
  fs::create_directories(out);
  const UtteranceDecoder decode = m.model->Decoder(
      m.config.decode.beam, gamma > 0.0 ? lm.model->lm() : nullptr, gamma);

  std::ofstream hyp_file(out / "hyps.tsv", std::ios::trunc);
  if (!hyp_file) throw std::runtime_error("cannot write " + (out / "hyps.tsv").string());
  std::vector<ReferenceEntry> refs;
  std::map<std::string, std::vector<int>> best;
  for (const Utterance &u : utts) {
    const auto hyps = decode(u.features);
    WriteHypotheses(hyp_file, u.id, hyps, nbest);
    refs.push_back({u.id, u.labels, ""});
    best[u.id] = hyps.empty() ? std::vector<int>{} : hyps.front().labels;
  }
  const CorpusScore score = ScoreCorpus(refs, best);
  ReportTable table;
  table.name = "metrics";
  table.key_columns = {"model"};
  table.rows.push_back({{ModelKindName(m.config.kind)}, score.total, {}});
  EmitReport(out.string(), table);
  std::printf("%s: %zu utterances, label error rate %.2f%% (sub %lld ins %lld "
              "del %lld)\n",
              ModelKindName(m.config.kind).c_str(), utts.size(),
              100.0 * score.total.rate(),
              static_cast<long long>(score.total.substitutions),
              static_cast<long long>(score.total.insertions),
              static_cast<long long>(score.total.deletions));
  return 0;
}

struct StressArgs {
  std::string mode, models, manifest, out, train_manifest;
  std::int64_t seed = 1;
  double fraction = 0.1;
  int max_repeat = 4;
  std::string factors = "5,10,20,40";
  int per_bucket = 10;
  std::string snrs = "0,5,10,15,20";
  std::string noise_types = "white,drift,babble";
};

int Stress(const StressArgs &a) {
  if (a.mode != "long" && a.mode != "repeat" && a.mode != "noise")
    throw ContractError("--mode must be long, repeat or noise");
  std::vector<LoadedModel> loaded;
  std::vector<NamedDecoder> decoders;
  for (const std::string &dir : Split(a.models, ',')) {
    loaded.push_back(LoadModelDir(dir));
    if (loaded.back().config.kind == ModelKind::kLm)
      throw ContractError(dir + " holds a language model");
  }
  if (loaded.empty()) throw ContractError("--models lists no model directory");
  const auto utts = LoadManifest(a.manifest);
  for (const LoadedModel &m : loaded) {
    CheckVocabulary(utts, m.model->config().vocab);
    decoders.push_back({ModelKindName(m.config.kind),
                        m.model->Decoder(m.config.decode.beam)});
  }
  const auto seed = static_cast<std::uint64_t>(a.seed);
  std::vector<StressCondition> conditions;
  std::vector<std::string> columns;
  if (a.mode == "repeat") {
    conditions = RepeatConditions(SampleSubset(utts, a.fraction, seed),
                                  a.max_repeat);
    columns = {"n"};
  } else if (a.mode == "long") {
    const auto &reference =
        a.train_manifest.empty() ? utts : LoadManifest(a.train_manifest, true);
    double mean = 0.0;
    for (const Utterance &u : reference) mean += static_cast<double>(u.features.rows());
    mean /= static_cast<double>(reference.size());
    std::vector<std::string> warnings;
    conditions = LongConditions(utts, SplitNumbers<double>(a.factors, "--factors"),
                                mean, a.per_bucket, seed, &warnings);
    for (const std::string &w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    columns = {"bucket", "min_frames", "max_frames"};
  } else {
    std::vector<NoiseType> types;
    for (const std::string &t : Split(a.noise_types, ',')) types.push_back(ParseNoiseType(t));
    conditions = NoiseConditions(SampleSubset(utts, a.fraction, seed), types,
                                 SplitNumbers<double>(a.snrs, "--snr"), seed);
    columns = {"noise", "snr_db"};
  }
  const ReportTable table = RunStress(a.mode, columns, conditions, decoders);
  EmitReport(a.out, table);
  std::cout << ReportCsv(table);
  return 0;
}

struct BenchArgs {
  std::string model_dir, config, checkpoint, manifest, out, loss_csv;
  int warmup = 1;
  int limit = 0;
};

int BenchRtf(const BenchArgs &a) {
  LoadedModel m = a.model_dir.empty() ? LoadModel(a.config, a.checkpoint)
                                      : LoadModelDir(a.model_dir);
  if (m.config.kind == ModelKind::kLm)
    throw ContractError("a language model has no real time factor");
  auto utts = LoadManifest(a.manifest);
  if (utts.empty()) throw ContractError("manifest " + a.manifest + " is empty");
  if (a.limit > 0 && utts.size() > static_cast<std::size_t>(a.limit))
    utts.resize(static_cast<std::size_t>(a.limit));
  const UtteranceDecoder decode = m.model->Decoder(m.config.decode.beam);
  const RtfReport report =
      MeasureRtf([&](const Utterance &u) { decode(u.features); }, utts, a.warmup);
  std::ostringstream os;
  WriteRtfJson(os, report);
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(os.str());
  j["model"] = ModelKindName(m.config.kind);
  j["parameters"] = m.model->params().ScalarCount();
  if (!a.loss_csv.empty()) {
    const auto records = ReadLossCsv(a.loss_csv);
    const fs::path speed = fs::path(a.loss_csv).parent_path() / "train_speed.json";
    nlohmann::ordered_json t;
    t["loss_csv_steps"] = records.empty() ? 0 : records.back().step;
    if (fs::exists(speed)) {
      std::ifstream is(speed);
      const auto s = nlohmann::json::parse(is);
      t["steps_per_s"] = s.at("steps_per_s");
      t["wall_s"] = s.at("wall_s");
    }
    j["training"] = t;
  }
  const std::string text = j.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    if (fs::path(a.out).has_parent_path())
      fs::create_directories(fs::path(a.out).parent_path());
    std::ofstream(a.out, std::ios::trunc) << text;
  }
  std::fprintf(stderr, "%s: rtf %.5f over %d utterances (%.2f s audio)\n",
               ModelKindName(m.config.kind).c_str(), report.rtf, report.n_utts,
               report.audio_s);
  return 0;
}

struct ReportArgs {
  std::string hyps, manifest, out, name = "report", group_by = "none";
};

int Report(const ReportArgs &a) {
  if (a.group_by != "none" && a.group_by != "speaker")
    throw ContractError("--group-by must be none or speaker");
  const auto utts = LoadManifest(a.manifest, false);
  std::ifstream is(a.hyps);
  if (!is) throw ContractError("cannot read " + a.hyps);
  std::map<std::string, std::vector<int>> best;
  std::string line;
  while (std::getline(is, line)) {
    const auto fields = [&] {
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string item;
      while (std::getline(ss, item, '\t')) f.push_back(item);
      return f;
    }();
    if (fields.size() < 2) throw FormatError(a.hyps + ": malformed line '" + line + "'");
    if (best.count(fields[0])) continue;  // later lines are n-best entries
    best[fields[0]] = SplitNumbers<int>(
        [&] { std::string s = fields[1]; std::replace(s.begin(), s.end(), ' ', ','); return s; }(),
        "hypothesis");
  }
  std::vector<ReferenceEntry> refs;
  for (const Utterance &u : utts)
    refs.push_back({u.id, u.labels, a.group_by == "speaker" ? u.speaker : "all"});
  const CorpusScore score = ScoreCorpus(refs, best);
  ReportTable table;
  table.name = a.name;
  table.key_columns = {"group"};
  for (const auto &[group, counts] : score.groups) table.rows.push_back({{group}, counts, {}});
  if (score.groups.size() > 1) table.rows.push_back({{"total"}, score.total, {}});
  EmitReport(a.out, table);
  std::cout << ReportCsv(table);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Synchronous-mode ASR toolkit: label-synchronous transformer "
               "and frame-synchronous CIF models"};
  app.require_subcommand(1);

  GenCorpusArgs gen;
  auto *gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  gen_cmd->add_option("--spec", gen.spec, "Corpus spec file ([corpus] section)")
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--n-train", gen.n_train, "Training utterances");
  gen_cmd->add_option("--n-test", gen.n_test, "Test utterances");
  gen_cmd->add_option("--seed", gen.seed, "Override the corpus seed");

  TrainArgs train;
  auto *train_cmd = app.add_subcommand("train", "Train a model from a config");
  train_cmd->add_option("config", train.config, "Experiment config")
      ->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", train.resume, "Training checkpoint")
      ->check(CLI::ExistingFile);

  DecodeArgs dec;
  auto *dec_cmd = app.add_subcommand("decode", "Decode and score a manifest");
  dec_cmd->add_option("config", dec.config, "Experiment config")
      ->required()->check(CLI::ExistingFile);
  dec_cmd->add_option("--checkpoint", dec.checkpoint,
                      "Model checkpoint (default <out_dir>/final.avg.bin)");
  dec_cmd->add_option("--manifest", dec.manifest, "Manifest (default test)");
  dec_cmd->add_option("--gamma", dec.gamma, "LM rescoring weight");
  dec_cmd->add_option("--nbest", dec.nbest, "Hypotheses written per utterance");
  dec_cmd->add_option("--lm", dec.lm_dir, "Trained LM directory");
  dec_cmd->add_option("--out", dec.out, "Output directory");

  StressArgs st;
  auto *st_cmd = app.add_subcommand("stress", "Long, repeated or noisy sweeps");
  st_cmd->add_option("--mode", st.mode, "long | repeat | noise")->required();
  st_cmd->add_option("--models", st.models, "Comma-separated model directories")
      ->required();
  st_cmd->add_option("--manifest", st.manifest, "Test manifest")
      ->required()->check(CLI::ExistingFile);
  st_cmd->add_option("--out", st.out, "Report directory")->required();
  st_cmd->add_option("--seed", st.seed, "Stress-set seed");
  st_cmd->add_option("--fraction", st.fraction,
                     "Fraction of the test set for repeat and noise modes");
  st_cmd->add_option("--max-repeat", st.max_repeat, "Largest repetition count");
  st_cmd->add_option("--factors", st.factors,
                     "Bucket edges as multiples of the mean training length");
  st_cmd->add_option("--per-bucket", st.per_bucket, "Utterances per bucket");
  st_cmd->add_option("--train-manifest", st.train_manifest,
                     "Manifest giving the mean training length");
  st_cmd->add_option("--snr", st.snrs, "Comma-separated SNRs in dB");
  st_cmd->add_option("--noise-types", st.noise_types, "white,drift,babble");

  BenchArgs bench;
  auto *bench_cmd = app.add_subcommand("bench-rtf", "Measure the real time factor");
  bench_cmd->add_option("--model", bench.model_dir, "Trained model directory");
  bench_cmd->add_option("--config", bench.config, "Experiment config");
  bench_cmd->add_option("--checkpoint", bench.checkpoint, "Model checkpoint");
  bench_cmd->add_option("--manifest", bench.manifest, "Manifest")
      ->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--warmup", bench.warmup, "Untimed leading utterances");
  bench_cmd->add_option("--limit", bench.limit, "Decode at most this many");
  bench_cmd->add_option("--loss-csv", bench.loss_csv,
                        "Training loss CSV for training speed")
      ->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", bench.out, "JSON report path (default stdout)");

  ReportArgs rep;
  auto *rep_cmd = app.add_subcommand("report", "Score a hypothesis file");
  rep_cmd->add_option("--hyps", rep.hyps, "Decode output")
      ->required()->check(CLI::ExistingFile);
  rep_cmd->add_option("--manifest", rep.manifest, "Reference manifest")
      ->required()->check(CLI::ExistingFile);
  rep_cmd->add_option("--out", rep.out, "Report directory")->required();
  rep_cmd->add_option("--name", rep.name, "Table name");
  rep_cmd->add_option("--group-by", rep.group_by, "none | speaker");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationError;
  }

  try {
    if (*gen_cmd) return GenCorpus(gen);
    if (*train_cmd) return Train(train);
    if (*dec_cmd) return Decode(dec);
    if (*st_cmd) return Stress(st);
    if (*bench_cmd) {
      if (bench.model_dir.empty() && bench.config.empty())
        throw ContractError("bench-rtf needs --model or --config");
      return BenchRtf(bench);
    }
    if (*rep_cmd) return Report(rep);
  } catch (const std::logic_error &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidationError;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return 0;
}
