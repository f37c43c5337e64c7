// Copyright 2026 The colab-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include <gtest/gtest.h>

#include "colab/cli.hpp"

namespace colab {
namespace {

namespace fs = std::filesystem;

int lab(const std::string& args) {
  const std::string cmd = std::string(COLAB_LAB_BINARY) + " --quiet " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return files;
}

class CliTest : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / "colab_cli_test"; }
  static fs::path data() { return root() / "data"; }
  static fs::path config() { return root() / "config.json"; }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    write_file_atomic(root() / "spec.json", R"({"image_size": 32, "organ_radius": {"lo": 7, "hi": 10},
      "roi_radius": {"lo": 2, "hi": 3}, "distractor_radius": {"lo": 2, "hi": 3},
      "clutter_radius": {"lo": 2, "hi": 4}, "n_train": 4, "n_test": 3, "seed": 5})");
    write_file_atomic(config(), R"({"alpha": 0.003, "epochs": 2, "iters_per_epoch": 3, "batch_size": 2,
      "patch_size": 16, "base_width": 4, "update_period": 2, "m": 4, "tau": 3, "seeds": [0, 1]})");
    ASSERT_EQ(lab("gen-data --spec " + (root() / "spec.json").string() + " --out " + data().string()), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(root()); }

  static std::string train(const std::string& arm, const fs::path& out, const std::string& extra = "") {
    return "train --config " + config().string() + " --dataset " + data().string() + " --arm " + arm + " --out " +
           out.string() + " " + extra;
  }
};

TEST_F(CliTest, GenDataIsReproducible) {
  const fs::path again = root() / "data_again";
  ASSERT_EQ(lab("gen-data --spec " + (root() / "spec.json").string() + " --out " + again.string()), 0);
  auto a = snapshot(data()), b = snapshot(again);
  std::erase_if(a, [](const auto& kv) { return kv.first.starts_with("context"); });
  EXPECT_EQ(a.size(), 7u * 3u + 1u);
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, MalformedInputsExitTwo) {
  write_file_atomic(root() / "bad_spec.json", "{\"image_size\": ");
  EXPECT_EQ(lab("gen-data --spec " + (root() / "bad_spec.json").string() + " --out " + (root() / "x").string()), 2);
  write_file_atomic(root() / "bad_config.json", R"({"alpha": -1})");
  EXPECT_EQ(lab("train --config " + (root() / "bad_config.json").string() + " --dataset " + data().string() +
                " --out " + (root() / "x").string()),
            2);
  write_file_atomic(root() / "unknown_config.json", R"({"alhpa": 0.1})");
  EXPECT_EQ(lab("train --config " + (root() / "unknown_config.json").string() + " --dataset " + data().string() +
                " --out " + (root() / "x").string()),
            2);
  EXPECT_EQ(lab(train("bogus", root() / "x")), 2);
  EXPECT_EQ(lab("train --dataset " + (root() / "missing").string() + " --out " + (root() / "x").string()), 2);
  EXPECT_EQ(lab(""), 2);
}

TEST_F(CliTest, NoneArmTrainsTwoChannels) {
  const fs::path out = root() / "none";
  ASSERT_EQ(lab(train("none", out)), 0);
  const Checkpoint ck = load_checkpoint(out / "checkpoint");
  EXPECT_EQ(ck.state.segmenter.config.out_channels, 2u);
  EXPECT_FALSE(fs::exists(out / "checkpoint" / "omega"));
  EXPECT_EQ(read_csv(out / "metrics.csv").rows.size(), 2u);
}

TEST_F(CliTest, ColabArmWritesGeneratorCheckpoint) {
  const fs::path out = root() / "colab";
  ASSERT_EQ(lab(train("colab", out, "--t 3")), 0);
  const Checkpoint ck = load_checkpoint(out / "checkpoint");
  EXPECT_EQ(ck.state.segmenter.config.out_channels, 4u);
  ASSERT_TRUE(ck.state.generator.has_value());
  EXPECT_EQ(ck.state.generator->config.out_channels, 3u);
}

TEST_F(CliTest, TrainingIsByteIdenticalOnRerun) {
  const fs::path a = root() / "det_a", b = root() / "det_b";
  ASSERT_EQ(lab(train("kmeans", a)), 0);
  ASSERT_EQ(lab(train("kmeans", b)), 0);
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  EXPECT_EQ(snapshot(a / "checkpoint"), snapshot(b / "checkpoint"));
  EXPECT_TRUE(fs::exists(data() / "context" / "kmeans_t2_seed0" / "manifest.json"));
  EXPECT_TRUE(fs::exists(data() / "context" / "kmeans_t2_seed0" / "case_0000.pgm"));
}

TEST_F(CliTest, ResumeReproducesUninterruptedRun) {
  const fs::path full = root() / "full", part = root() / "part";
  ASSERT_EQ(lab(train("colab", full)), 0);
  ASSERT_EQ(lab(train("colab", part, "--stop-after 1")), 0);
  EXPECT_EQ(read_csv(part / "metrics.csv").rows.size(), 1u);
  ASSERT_EQ(lab(train("colab", part, "--resume")), 0);
  EXPECT_EQ(read_file(part / "metrics.csv"), read_file(full / "metrics.csv"));
  EXPECT_EQ(snapshot(part / "checkpoint"), snapshot(full / "checkpoint"));
}

TEST_F(CliTest, ResumeRejectsForeignCheckpoint) {
  const fs::path out = root() / "foreign";
  ASSERT_EQ(lab(train("none", out, "--stop-after 1")), 0);
  EXPECT_EQ(lab(train("oracle", out, "--resume")), 2);
}

TEST_F(CliTest, EvalIsStableAndPostprocessOnlyTouchesMetrics) {
  const fs::path run = root() / "eval_run", out = root() / "eval_out", again = root() / "eval_again";
  ASSERT_EQ(lab(train("oracle", run)), 0);
  ASSERT_EQ(lab("eval --checkpoint " + run.string() + " --dataset " + data().string() + " --out " + out.string()), 0);
  ASSERT_EQ(lab("eval --checkpoint " + run.string() + " --dataset " + data().string() + " --out " + again.string()), 0);
  EXPECT_EQ(read_file(out / "eval_test.csv"), read_file(again / "eval_test.csv"));
  ASSERT_EQ(lab("eval --postprocess --checkpoint " + run.string() + " --dataset " + data().string() + " --out " +
                out.string()),
            0);
  const CsvTable plain = read_csv(out / "eval_test.csv"), pp = read_csv(out / "eval_test_pp.csv");
  ASSERT_EQ(plain.rows.size(), 3u);
  ASSERT_EQ(pp.rows.size(), 3u);
  EXPECT_EQ(plain.header, pp.header);
  const std::size_t id = plain.column("case_id"), fp = plain.column("fp"), tp = plain.column("tp");
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(plain.rows[r][id], pp.rows[r][id]);
    EXPECT_LE(std::stoul(pp.rows[r][fp]), std::stoul(plain.rows[r][fp]));
    EXPECT_LE(std::stoul(pp.rows[r][tp]), std::stoul(plain.rows[r][tp]));
  }
}

TEST_F(CliTest, ExportLogitsAndHistograms) {
  const fs::path run = root() / "logit_run", out = root() / "logit_out";
  ASSERT_EQ(lab(train("colab", run)), 0);
  ASSERT_EQ(lab("export-logits --samples 500 --roi-share 0.2 --checkpoint " + run.string() + " --dataset " +
                data().string() + " --out " + out.string()),
            0);
  const CsvTable t = read_csv(out / "logits_test.csv");
  ASSERT_EQ(t.rows.size(), 500u);
  std::size_t roi = 0;
  for (const auto& row : t.rows) roi += row[0] == "1";
  EXPECT_EQ(roi, 100u);

  ASSERT_EQ(lab("hist --arm colab --bins 8 --checkpoint " + run.string() + " --dataset " + data().string() +
                " --out " + out.string()),
            0);
  const CsvTable h = read_csv(out / "hist_train.csv");
  EXPECT_EQ(h.rows.size(), 3u * 8u);
  std::map<std::string, double> mass;
  for (const auto& row : h.rows) mass[row[0]] += std::stod(row[4]);
  EXPECT_NEAR(mass["roi"], 1.0, 1e-6);
  ASSERT_EQ(lab("hist --arm oracle --split test --dataset " + data().string() + " --out " + out.string()), 2);
  ASSERT_EQ(lab("hist --arm none --split test --dataset " + data().string() + " --out " + out.string()), 0);
}

TEST_F(CliTest, CompareSummarizesAndMarksGaps) {
  const fs::path plan = root() / "plan.json", out = root() / "cmp";
  write_file_atomic(plan, "{\"dataset\": \"data\", \"out\": \"cmp\", \"config\": \"config.json\", \"seeds\": [0, 1],"
                          " \"arms\": [{\"arm\": \"none\"}, {\"arm\": \"dilated\"}]}");
  EXPECT_EQ(lab("compare " + plan.string()), 1);
  EXPECT_NE(read_file(out / "summary.csv").find("MISSING"), std::string::npos);

  ASSERT_EQ(lab("compare --run " + plan.string()), 0);
  const std::string summary = read_file(out / "summary.csv");
  EXPECT_EQ(summary.find("MISSING"), std::string::npos);
  const CsvTable runs = read_csv(out / "runs.csv"), sum = read_csv(out / "summary.csv");
  ASSERT_EQ(runs.rows.size(), 4u);
  ASSERT_EQ(sum.rows.size(), 2u);
  for (std::size_t a = 0; a < 2; ++a) {
    const double d0 = std::stod(runs.rows[2 * a][runs.column("dsc")]);
    const double d1 = std::stod(runs.rows[2 * a + 1][runs.column("dsc")]);
    EXPECT_NEAR(std::stod(sum.rows[a][sum.column("dsc_mean")]), 0.5 * (d0 + d1), 1e-8);
  }
  // rerunning is idempotent
  ASSERT_EQ(lab("compare " + plan.string()), 0);
  EXPECT_EQ(read_file(out / "summary.csv"), summary);

  fs::remove_all(out / "dilated_t2" / "seed_1");
  EXPECT_EQ(lab("compare " + plan.string()), 1);
  const CsvTable gap = read_csv(out / "summary.csv");
  EXPECT_EQ(gap.rows[1][gap.column("missing")], "1");
}

TEST_F(CliTest, PlanSeedsMustBePaired) {
  const fs::path plan = root() / "unpaired.json";
  write_file_atomic(plan, "{\"dataset\": \"data\", \"out\": \"cmp2\", \"seeds\": [0, 1],"
                          " \"arms\": [{\"arm\": \"none\", \"seeds\": [0]}]}");
  EXPECT_EQ(lab("compare " + plan.string()), 2);
}

TEST_F(CliTest, DivergenceExitsThree) {
  write_file_atomic(root() / "wild.json", R"({"alpha": 5.0, "momentum": 0.0, "epochs": 1, "iters_per_epoch": 40,
    "batch_size": 2, "patch_size": 16, "base_width": 4, "divergence_factor": 1.000001})");
  EXPECT_EQ(lab("train --arm none --config " + (root() / "wild.json").string() + " --dataset " + data().string() +
                " --out " + (root() / "wild").string()),
            3);
}

TEST(ArmLabels, NamesAndEffectiveClasses) {
  EXPECT_EQ(cli::arm_label(ContextKind::kNone, 5), "none");
  EXPECT_EQ(cli::arm_label(ContextKind::kColab, 3), "colab_t3");
  EXPECT_EQ(cli::effective_t(ContextKind::kOracle, 4), 2u);
  EXPECT_EQ(cli::run_dir("r", ContextKind::kDilated, 5, 7), fs::path("r/dilated_t2/seed_7"));
}

}  // namespace
}  // namespace colab
