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
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "test_support.hpp"

#ifndef SKETCHTUNE_CLI_PATH
#error "SKETCHTUNE_CLI_PATH must point at the built command-line tool"
#endif

namespace {

using nlohmann::json;
using sketchtune::testing::TempDir;

struct Result {
  int code = -1;
  std::string out;
};

class CliTest : public ::testing::Test {
 protected:
  CliTest() : dir_("cli") {}

  Result run(const std::string& args) {
    const auto out = dir_ / "stdout.txt";
    const std::string cmd = "SKETCHTUNE_RUNS_DIR='" + (dir_ / "runs").string() + "' '" + SKETCHTUNE_CLI_PATH + "' " +
                            args + " > '" + out.string() + "' 2> '" + (dir_ / "stderr.txt").string() + "'";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
  }

  std::string synth(int positives, int negatives) {
    const std::string out = (dir_ / "data").string();
    const Result r = run("dataset synth --seed 5 --size 16 --positives " + std::to_string(positives) +
                         " --negatives " + std::to_string(negatives) + " --out '" + out + "'");
    EXPECT_EQ(r.code, 0) << r.out;
    return out + "/manifest.jsonl";
  }

  std::string write_config(const std::string& name, const json& j) {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
  }

  TempDir dir_;
};

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("vae train --epochs not-a-number").code, 2);
}

TEST_F(CliTest, SynthThenValidateSucceeds) {
  const std::string manifest = synth(3, 1);
  const Result r = run("dataset validate --seed 1 --data '" + manifest + "'");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\"findings\": 0"), std::string::npos) << r.out;
}

TEST_F(CliTest, ValidationFindingsExitWithFailure) {
  const std::string manifest = synth(3, 1);
  std::ifstream in(manifest);
  std::string first;
  std::getline(in, first);
  std::ofstream(manifest, std::ios::app) << first << "\n";
  EXPECT_EQ(run("dataset validate --seed 1 --data '" + manifest + "'").code, 1);
}

TEST_F(CliTest, MissingSeedIsConfigError) {
  EXPECT_EQ(run("dataset synth --size 16 --positives 2").code, 2);
}

TEST_F(CliTest, MissingDenoiserIsPrerequisiteError) {
  const std::string manifest = synth(2, 0);
  EXPECT_EQ(run("ddpo train --seed 1 --data '" + manifest + "'").code, 3);
  EXPECT_EQ(run("generate --prompt fish --out '" + (dir_ / "x.png").string() + "' --ckpt '" +
                (dir_ / "none.ckpt").string() + "'").code, 3);
}

TEST_F(CliTest, ConfigValidate) {
  json good = {{"stage", "dataset"}, {"seed", 1}, {"dataset", {{"action", "synth"}}}};
  EXPECT_EQ(run("config validate '" + write_config("good.json", good) + "'").code, 0);
  json bad = good;
  bad["ddpo"] = {{"alpha", 1.5}};
  EXPECT_EQ(run("config validate '" + write_config("bad.json", bad) + "'").code, 2);
  std::ifstream err(dir_ / "stderr.txt");
  std::stringstream ss;
  ss << err.rdbuf();
  EXPECT_NE(ss.str().find("alpha out of [0,1]"), std::string::npos);
  EXPECT_EQ(run("config validate '" + (dir_ / "absent.json").string() + "'").code, 2);
}

TEST_F(CliTest, ConfigFileWithOverrides) {
  json cfg = {{"stage", "dataset"}, {"seed", 1}, {"dataset", {{"action", "synth"}, {"size", 16},
                                                               {"positive_originals", 2}}}};
  const std::string path = write_config("c.json", cfg);
  const Result r = run("dataset synth --config '" + path + "' --positives 3");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\"positive\": 3"), std::string::npos) << r.out;
}

TEST_F(CliTest, RewardScore) {
  const std::string manifest = synth(1, 0);
  json qa = json::array({{{"q", "Is the background white?"}, {"a", "yes"}, {"kind", "sketch"}},
                         {{"q", "What animal is in the picture?"}, {"a", "fish"}, {"kind", "instance"}}});
  const std::string qa_path = write_config("qa.json", qa);
  const std::string png = (dir_ / "data" / "images").string();
  std::string image;
  for (const auto& e : std::filesystem::directory_iterator(png)) image = e.path().string();
  ASSERT_FALSE(image.empty());
  const Result r = run("reward score --ckpt-image '" + image + "' --qa '" + qa_path + "' --backend constant:yes");
  EXPECT_EQ(r.code, 0);
  const json rep = json::parse(r.out);
  EXPECT_DOUBLE_EQ(rep.at("r_sketch").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(rep.at("r_instance").get<double>(), 0.0);
  EXPECT_EQ(run("reward score --ckpt-image '" + image + "' --qa '" + qa_path + "' --alpha 2").code, 2);
}

}  // namespace
