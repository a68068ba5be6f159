// Copyright 2026 The sketchtune Authors. All Rights Reserved.
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

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>

#include "sketchtune/checkpoint.hpp"
#include "sketchtune/config.hpp"
#include "sketchtune/error.hpp"
#include "sketchtune/pipeline.hpp"
#include "test_support.hpp"

namespace sketchtune {
namespace {

using nlohmann::json;
using testing::TempDir;

bool has_issue(const std::vector<ConfigIssue>& issues, const std::string& field, const std::string& message) {
  return std::any_of(issues.begin(), issues.end(),
                     [&](const ConfigIssue& i) { return i.field == field && i.message.find(message) != std::string::npos; });
}

json synth_tree() {
  return {{"stage", "dataset"}, {"seed", 3}, {"dataset", {{"action", "synth"}, {"size", 16},
                                                            {"positive_originals", 4}, {"negative_originals", 2}}}};
}

void write_file(const std::filesystem::path& p, const json& j) {
  std::ofstream(p) << j.dump(2);
}

TEST(ConfigCheck, ValidTreeHasNoIssues) {
  const ConfigCheck c = check_config(synth_tree());
  EXPECT_TRUE(c.ok());
  EXPECT_TRUE(c.warnings.empty());
}

TEST(ConfigCheck, AlphaOutsideUnitIntervalIsRejected) {
  json t = synth_tree();
  t["ddpo"]["alpha"] = 1.5;
  const ConfigCheck c = check_config(t);
  EXPECT_FALSE(c.ok());
  EXPECT_TRUE(has_issue(c.errors, "ddpo.alpha", "alpha out of [0,1]"));
  t["ddpo"]["alpha"] = 1.0;
  EXPECT_TRUE(check_config(t).ok());
  t["eval"]["alpha"] = -0.1;
  EXPECT_TRUE(has_issue(check_config(t).errors, "eval.alpha", "alpha out of [0,1]"));
}

TEST(ConfigCheck, NegativePerceptualWeightIsRejected) {
  json t = synth_tree();
  t["vae"]["lpips_weight"] = -0.5;
  EXPECT_TRUE(has_issue(check_config(t).errors, "vae.lpips_weight", "lambda must be >= 0"));
}

TEST(ConfigCheck, OmittedPerceptualWeightWarnsAndDefaults) {
  TempDir dir("cfg-lambda");
  json t = synth_tree();
  write_file(dir / "m.jsonl", json::object());
  t["stage"] = "vae";
  t["paths"]["data"] = (dir / "m.jsonl").string();
  const ConfigCheck c = check_config(t);
  EXPECT_TRUE(c.ok());
  EXPECT_TRUE(has_issue(c.warnings, "vae.lpips_weight", "lambda omitted; default 0.1 applied"));
  const ExperimentConfig cfg = make_config(t);
  EXPECT_DOUBLE_EQ(cfg.section("vae").at("lpips_weight").get<double>(), 0.1);
  EXPECT_DOUBLE_EQ(cfg.section("vae").at("kl_weight").get<double>(), 0.0);
  EXPECT_FALSE(cfg.warnings.empty());
}

TEST(ConfigCheck, SeedIsMandatoryInToyMode) {
  json t = synth_tree();
  t.erase("seed");
  EXPECT_TRUE(has_issue(check_config(t).errors, "seed", "mandatory"));
  t["seed"] = -4;
  EXPECT_FALSE(check_config(t).ok());
  EXPECT_THROW(make_config(t), ConfigInvalid);
}

TEST(ConfigCheck, StepCountMustBePositive) {
  json t = synth_tree();
  t["unet"]["steps"] = 0;
  EXPECT_TRUE(has_issue(check_config(t).errors, "unet.steps", "T must be >= 1"));
  t["unet"]["steps"] = 1;
  EXPECT_TRUE(check_config(t).ok());
}

TEST(ConfigCheck, StructuralRules) {
  json t = synth_tree();
  t["stage"] = "nope";
  EXPECT_TRUE(has_issue(check_config(t).errors, "stage", "unknown stage"));
  t = synth_tree();
  t["mode"] = "real";
  t["stage"] = "vae";
  EXPECT_TRUE(has_issue(check_config(t).errors, "mode", "not bundled"));
  t = synth_tree();
  t["dataset"]["action"] = "validate";
  EXPECT_TRUE(has_issue(check_config(t).errors, "paths.data", "required"));
  t["paths"]["data"] = "/definitely/not/here.jsonl";
  EXPECT_TRUE(has_issue(check_config(t).errors, "paths.data", "does not exist"));
  t = synth_tree();
  t["unet"]["beta_min"] = 0.3;
  t["unet"]["beta_max"] = 0.2;
  EXPECT_FALSE(check_config(t).ok());
  t = synth_tree();
  t["surprise"] = 1;
  const ConfigCheck c = check_config(t);
  EXPECT_TRUE(c.ok());
  EXPECT_TRUE(has_issue(c.warnings, "surprise", "unknown key"));
  t = synth_tree();
  t["vae"]["hidden"] = 2.5;
  EXPECT_TRUE(has_issue(check_config(t).errors, "vae.hidden", "integer"));
  t = synth_tree();
  t["eval"]["metrics"] = {"fid", "bleu"};
  EXPECT_FALSE(check_config(t).ok());
}

TEST(ConfigFile, IncludesMergeAndRelativePathsResolve) {
  TempDir dir("cfg-include");
  std::filesystem::create_directories(dir / "sub");
  write_file(dir / "sub" / "base.json", {{"seed", 9}, {"vae", {{"epochs", 2}, {"hidden", 32}}}});
  json top = synth_tree();
  top["include"] = "sub/base.json";
  top["vae"] = {{"hidden", 64}};
  top["paths"] = {{"runs", "runs_here"}};
  write_file(dir / "top.json", top);
  const ExperimentConfig cfg = load_config(dir / "top.json");
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.section("vae").at("epochs").get<int>(), 2);
  EXPECT_EQ(cfg.section("vae").at("hidden").get<int>(), 64);
  EXPECT_EQ(cfg.section("vae").at("batch_size").get<int>(), 8);
  EXPECT_FALSE(cfg.tree.contains("include"));
  EXPECT_EQ(*cfg.path("runs"), (dir / "runs_here").lexically_normal());
  EXPECT_FALSE(cfg.path("data").has_value());
}

TEST(ConfigFile, IncludeCycleIsAnError) {
  TempDir dir("cfg-cycle");
  write_file(dir / "a.json", {{"include", "b.json"}, {"stage", "dataset"}});
  write_file(dir / "b.json", {{"include", "a.json"}, {"seed", 1}});
  EXPECT_THROW(load_config(dir / "a.json"), ConfigInvalid);
}

TEST(ConfigFile, UnparsableFileIsFormatError) {
  TempDir dir("cfg-bad");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), FormatError);
  EXPECT_THROW(load_config(dir / "missing.json"), IoError);
}

TEST(ConfigFile, ValidateReportsWithoutThrowing) {
  TempDir dir("cfg-validate");
  json t = synth_tree();
  t["ddpo"]["alpha"] = 1.5;
  write_file(dir / "c.json", t);
  const ConfigCheck c = validate_config(dir / "c.json");
  EXPECT_FALSE(c.ok());
  EXPECT_TRUE(has_issue(c.errors, "ddpo.alpha", "alpha out of [0,1]"));
}

TEST(Backends, SpecParsing) {
  EXPECT_EQ(make_backend("none"), nullptr);
  EXPECT_EQ(make_backend(""), nullptr);
  EXPECT_NE(make_backend("heuristic"), nullptr);
  auto constant = make_backend("constant:yes");
  ASSERT_NE(constant, nullptr);
  EXPECT_EQ(constant->answer(Raster(4, 4, 1, 255), "Is the background white?"), "yes");
  EXPECT_NE(make_backend("http://127.0.0.1:9/vqa"), nullptr);
  EXPECT_THROW(make_backend("telepathy"), ConfigInvalid);
}

TEST(RunsRoot, EnvironmentOverridesConfig) {
  json t = synth_tree();
  t["paths"]["runs"] = "/tmp/from-config";
  const ExperimentConfig cfg = make_config(t);
  ::unsetenv("SKETCHTUNE_RUNS_DIR");
  EXPECT_EQ(runs_root(cfg), std::filesystem::path("/tmp/from-config"));
  ::setenv("SKETCHTUNE_RUNS_DIR", "/tmp/from-env", 1);
  EXPECT_EQ(runs_root(cfg), std::filesystem::path("/tmp/from-env"));
  ::unsetenv("SKETCHTUNE_RUNS_DIR");
}

// Shared toy pipeline: synthetic data, autoencoder, denoiser.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pipeline");
    ::unsetenv("SKETCHTUNE_RUNS_DIR");
    const RunRecord data = run_stage(make_config(with_runs(synth_tree())));
    manifest_ = new std::filesystem::path(data.dir / data.summary.at("manifest").get<std::string>());

    json vae = with_runs(base("vae"));
    vae["vae"] = {{"epochs", 1}, {"hidden", 16}, {"latent_side", 4}, {"batch_size", 4}, {"lpips_weight", 0.1}};
    const RunRecord v = run_stage(make_config(vae));
    vae_ckpt_ = new std::filesystem::path(v.dir / v.summary.at("checkpoint").get<std::string>());

    json unet = with_runs(base("unet"));
    unet["paths"]["vae_checkpoint"] = vae_ckpt_->string();
    unet["unet"] = {{"epochs", 2}, {"steps", 5}, {"channels", 4}, {"embed_dim", 4}, {"time_dim", 4}};
    const RunRecord u = run_stage(make_config(unet));
    unet_ckpt_ = new std::filesystem::path(u.dir / u.summary.at("checkpoint").get<std::string>());
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete vae_ckpt_;
    delete unet_ckpt_;
    delete dir_;
  }

  static json with_runs(json t) {
    t["paths"]["runs"] = (*dir_ / "runs").string();
    return t;
  }
  static json base(const std::string& stage) {
    json t = {{"stage", stage}, {"seed", 3}, {"paths", {{"data", manifest_ ? manifest_->string() : ""}}}};
    return with_runs(t);
  }
  static std::map<std::string, std::string> digests(const RunRecord& r) {
    std::map<std::string, std::string> out;
    for (const auto& a : r.artifacts) out[a.path] = a.sha256;
    return out;
  }

  static TempDir* dir_;
  static std::filesystem::path* manifest_;
  static std::filesystem::path* vae_ckpt_;
  static std::filesystem::path* unet_ckpt_;
};

TempDir* PipelineTest::dir_ = nullptr;
std::filesystem::path* PipelineTest::manifest_ = nullptr;
std::filesystem::path* PipelineTest::vae_ckpt_ = nullptr;
std::filesystem::path* PipelineTest::unet_ckpt_ = nullptr;

TEST_F(PipelineTest, RunDirectoryLayout) {
  json t = base("generate");
  t["paths"]["unet_checkpoint"] = unet_ckpt_->string();
  const RunRecord r = run_stage(make_config(t));
  EXPECT_EQ(r.status, "completed");
  for (const char* f : {"config.json", "report.json", "run.json", "checkpoints", "metrics", "images"})
    EXPECT_TRUE(std::filesystem::exists(r.dir / f)) << f;
  EXPECT_EQ(r.run_id.substr(r.run_id.find('-', 9) + 1, 8), r.input_hash.substr(0, 8));
  EXPECT_EQ(r.summary.at("generated").get<int>(), 4);
  const RunRecord back = load_run_record(r.dir);
  EXPECT_EQ(back.input_hash, r.input_hash);
  EXPECT_EQ(back.artifacts.size(), r.artifacts.size());
}

TEST_F(PipelineTest, DdpoWithoutDenoiserIsMissingPrerequisite) {
  json t = base("ddpo");
  try {
    run_stage(make_config(t));
    FAIL() << "expected MissingPrerequisite";
  } catch (const MissingPrerequisite& e) {
    EXPECT_EQ(e.stage(), "unet");
  }
  t["paths"]["unet_checkpoint"] = vae_ckpt_->string();
  try {
    run_stage(make_config(t));
    FAIL() << "expected MissingPrerequisite";
  } catch (const MissingPrerequisite& e) {
    EXPECT_EQ(e.stage(), "unet");
  }
  t["paths"]["unet_checkpoint"] = (dir_->path() / "nowhere.ckpt").string();
  EXPECT_THROW(run_stage(make_config(t)), MissingPrerequisite);
}

TEST_F(PipelineTest, FailedRunStillWritesRecord) {
  json t = base("ddpo");
  t["paths"]["runs"] = (dir_->path() / "failed_runs").string();
  EXPECT_THROW(run_stage(make_config(t)), MissingPrerequisite);
  std::vector<std::filesystem::path> runs;
  for (const auto& e : std::filesystem::directory_iterator(dir_->path() / "failed_runs")) runs.push_back(e.path());
  ASSERT_EQ(runs.size(), 1u);
  const RunRecord r = load_run_record(runs.front());
  EXPECT_EQ(r.status, "failed");
  EXPECT_NE(r.error.find("unet"), std::string::npos);
}

TEST_F(PipelineTest, LatentDenoiserRejectsDifferentAutoencoder) {
  EXPECT_NO_THROW(load_generator(*unet_ckpt_));
  EXPECT_THROW(load_generator(*unet_ckpt_, dir_->path() / "absent.ckpt"), MissingPrerequisite);
  EXPECT_THROW(load_generator(*vae_ckpt_), MissingPrerequisite);
}

TEST_F(PipelineTest, RepeatedStagesGiveIdenticalDigests) {
  for (const std::string stage : {"vae", "unet", "ddpo", "generate"}) {
    json t = base(stage);
    if (stage == "vae") t["vae"] = {{"epochs", 1}, {"hidden", 16}, {"latent_side", 4}, {"lpips_weight", 0.1}};
    if (stage == "unet") {
      t["paths"]["vae_checkpoint"] = vae_ckpt_->string();
      t["unet"] = {{"epochs", 1}, {"steps", 5}, {"channels", 4}, {"embed_dim", 4}, {"time_dim", 4}};
    }
    if (stage == "ddpo" || stage == "generate") t["paths"]["unet_checkpoint"] = unet_ckpt_->string();
    if (stage == "ddpo") t["ddpo"] = {{"updates", 2}, {"checkpoint_interval", 1}};
    const RunRecord a = run_stage(make_config(t));
    const RunRecord b = run_stage(make_config(t));
    EXPECT_NE(a.dir, b.dir);
    EXPECT_EQ(a.input_hash, b.input_hash) << stage;
    EXPECT_EQ(digests(a), digests(b)) << stage;
    EXPECT_FALSE(a.artifacts.empty()) << stage;
  }
}

TEST_F(PipelineTest, EvalOnGeneratedImages) {
  json g = base("generate");
  g["paths"]["unet_checkpoint"] = unet_ckpt_->string();
  const RunRecord gen = run_stage(make_config(g));
  json e = base("eval");
  e["paths"]["gen_dir"] = (gen.dir / "images").string();
  e["eval"] = {{"bootstrap", 10}};
  const RunRecord r = run_stage(make_config(e));
  EXPECT_EQ(r.status, "completed");
  for (const char* m : {"fid", "clip", "tifa"}) {
    ASSERT_TRUE(r.summary.contains(m)) << m;
    EXPECT_TRUE(std::isfinite(r.summary.at(m).at("mean").get<double>())) << m;
  }
  const double tifa = r.summary.at("tifa").at("mean").get<double>();
  EXPECT_GE(tifa, 0.0);
  EXPECT_LE(tifa, 1.0);
}

TEST_F(PipelineTest, VerifyDetectsTampering) {
  json t = base("dataset");
  t["dataset"] = {{"action", "validate"}};
  const RunRecord r = run_stage(make_config(t));
  EXPECT_TRUE(verify_run(r.dir).empty());
  std::ofstream(r.dir / "report.json", std::ios::app) << " ";
  const auto problems = verify_run(r.dir);
  ASSERT_EQ(problems.size(), 1u);
  EXPECT_NE(problems.front().find("report.json"), std::string::npos);
  std::filesystem::remove(r.dir / "config.json");
  EXPECT_EQ(verify_run(r.dir).size(), 2u);
}

TEST_F(PipelineTest, DatasetSplitNeedsTwoOriginalsPerClass) {
  json t = base("dataset");
  t["dataset"] = {{"action", "split"}, {"train_fraction", 0.5}};
  EXPECT_THROW(run_stage(make_config(t)), InsufficientData);

  json synth = with_runs(synth_tree());
  synth["dataset"]["positive_originals"] = 60;
  synth["dataset"]["negative_originals"] = 0;
  const RunRecord data = run_stage(make_config(synth));
  t["paths"]["data"] = (data.dir / data.summary.at("manifest").get<std::string>()).string();
  const RunRecord r = run_stage(make_config(t));
  EXPECT_EQ(r.summary.at("train").at("records").get<int>(), 30);
  EXPECT_EQ(r.summary.at("test").at("records").get<int>(), 30);
}

}  // namespace
}  // namespace sketchtune
