// tests/cli-test.cc

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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

namespace {

namespace fs = std::filesystem;

int RunCli(const std::string &args, const fs::path &log) {
  const std::string cmd = std::string(SYNCASR_CLI) + " " + args + " >" +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Slurp(const fs::path &p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

fs::path TempDir(const std::string &name) {
  fs::path p = fs::temp_directory_path() / ("syncasr-cli-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void WriteFile(const fs::path &p, const std::string &text) {
  std::ofstream(p) << text;
}

const char kSmallCorpus[] =
    "[corpus]\nn_labels = 6\nd_feat = 8\nmin_labels = 2\nmax_labels = 4\n"
    "min_frames = 6\nmax_frames = 9\nspeakers = 3\n";

std::string SmallConfig(const fs::path &dir, const std::string &kind) {
  return "[experiment]\nkind = " + kind + "\nseed = 3\nout_dir = " +
         (dir / kind).string() + "\n[corpus]\ntrain_manifest = " +
         (dir / "data" / "train.manifest").string() + "\ntest_manifest = " +
         (dir / "data" / "test.manifest").string() +
         "\n[model]\nd_model = 16\nd_ff = 32\nn_heads = 2\nd_feat = 8\n"
         "n_labels = 6\nencoder_layers = 1\ndecoder_layers = 1\n"
         "[train]\nwarmup = 20\nbatch_frames = 300\nmax_steps = 12\n"
         "checkpoint_every = 4\nkeep_checkpoints = 2\naverage_count = 2\n"
         "[decode]\nbeam = 3\n";
}

TEST(Cli, GenCorpusIsDeterministic) {
  const fs::path dir = TempDir("gen");
  WriteFile(dir / "spec.ini", kSmallCorpus);
  const std::string spec = " --spec " + (dir / "spec.ini").string();
  for (const char *sub : {"a", "b"})
    ASSERT_EQ(RunCli("gen-corpus" + spec + " --n-train 5 --n-test 3 --out " +
                      (dir / sub).string(),
                  dir / "log"),
              0)
        << Slurp(dir / "log");
  for (const char *f : {"train.manifest", "test/transcripts.tsv",
                        "train/features/train-00004.feat", "corpus.ini"})
    EXPECT_EQ(Slurp(dir / "a" / f), Slurp(dir / "b" / f)) << f;
  EXPECT_FALSE(Slurp(dir / "a" / "test/features/test-00002.feat").empty());
  ASSERT_EQ(RunCli("gen-corpus" + spec + " --seed 9 --n-train 5 --n-test 3 --out " +
                    (dir / "c").string(),
                dir / "log"),
            0);
  EXPECT_NE(Slurp(dir / "a" / "train.manifest").size(), 0u);
  EXPECT_NE(Slurp(dir / "a" / "train/features/train-00000.feat"),
            Slurp(dir / "c" / "train/features/train-00000.feat"));
}

TEST(Cli, ValidationErrorsExitTwo) {
  const fs::path dir = TempDir("errors");
  const fs::path log = dir / "log";
  EXPECT_EQ(RunCli("gen-corpus --n-train 0 --out " + (dir / "x").string(), log), 2);
  EXPECT_NE(Slurp(log).find("--n-train"), std::string::npos);
  EXPECT_EQ(RunCli("", log), 2);
  EXPECT_EQ(RunCli("frobnicate", log), 2);
  EXPECT_EQ(RunCli("gen-corpus", log), 2);  // --out missing
  WriteFile(dir / "bad.ini", "[model]\nd_modle = 16\n");
  EXPECT_EQ(RunCli("train " + (dir / "bad.ini").string(), log), 2);
  EXPECT_NE(Slurp(log).find("d_modle"), std::string::npos);
  WriteFile(dir / "nodata.ini", SmallConfig(dir, "cif"));
  EXPECT_EQ(RunCli("train " + (dir / "nodata.ini").string(), log), 2);
  EXPECT_EQ(RunCli("--help", log), 0);
}

TEST(Cli, TrainDecodeReportRoundTrip) {
  const fs::path dir = TempDir("e2e");
  const fs::path log = dir / "log";
  WriteFile(dir / "spec.ini", kSmallCorpus);
  ASSERT_EQ(RunCli("gen-corpus --spec " + (dir / "spec.ini").string() +
                    " --n-train 12 --n-test 4 --out " + (dir / "data").string(),
                log),
            0);
  WriteFile(dir / "cif.ini", SmallConfig(dir, "cif"));
  ASSERT_EQ(RunCli("train " + (dir / "cif.ini").string(), log), 0) << Slurp(log);
  EXPECT_TRUE(fs::exists(dir / "cif" / "final.avg.bin"));
  EXPECT_TRUE(fs::exists(dir / "cif" / "config.ini"));

  for (const char *sub : {"d1", "d2"})
    ASSERT_EQ(RunCli("decode " + (dir / "cif.ini").string() + " --nbest 2 --out " +
                      (dir / sub).string(),
                  log),
              0)
        << Slurp(log);
  EXPECT_FALSE(Slurp(dir / "d1" / "hyps.tsv").empty());
  EXPECT_EQ(Slurp(dir / "d1" / "hyps.tsv"), Slurp(dir / "d2" / "hyps.tsv"));
  EXPECT_TRUE(fs::exists(dir / "d1" / "metrics.json"));

  ASSERT_EQ(RunCli("report --hyps " + (dir / "d1" / "hyps.tsv").string() +
                    " --manifest " + (dir / "data" / "test.manifest").string() +
                    " --group-by speaker --name by_speaker --out " +
                    (dir / "r").string(),
                log),
            0)
      << Slurp(log);
  const std::string csv = Slurp(dir / "r" / "by_speaker.csv");
  EXPECT_EQ(csv.rfind("group,sub,ins,del,ref_len,errors,rate\nspk", 0), 0u) << csv;

  ASSERT_EQ(RunCli("bench-rtf --model " + (dir / "cif").string() + " --manifest " +
                    (dir / "data" / "test.manifest").string() + " --out " +
                    (dir / "rtf.json").string(),
                log),
            0)
      << Slurp(log);
  EXPECT_NE(Slurp(dir / "rtf.json").find("\"rtf\""), std::string::npos);

  // A truncated checkpoint is a runtime failure.
  const std::string ckpt = Slurp(dir / "cif" / "final.avg.bin");
  WriteFile(dir / "broken.bin", ckpt.substr(0, ckpt.size() / 2));
  EXPECT_EQ(RunCli("decode " + (dir / "cif.ini").string() + " --checkpoint " +
                    (dir / "broken.bin").string() + " --out " +
                    (dir / "d3").string(),
                log),
            3);
  EXPECT_NE(Slurp(log).find("byte"), std::string::npos) << Slurp(log);
}

}  // namespace
