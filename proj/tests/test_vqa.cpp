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

#include <atomic>
#include <fstream>
#include <random>
#include <thread>

#include "json.hpp"
#include "sketchtune/error.hpp"
#include "sketchtune/vqa.hpp"
#include "sketchtune/vqa_http.hpp"
#include "test_support.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro collides with Eigen internals.
#include <httplib.h>

namespace sketchtune {
namespace {

// The positive fish drawing and its four questions.
std::vector<QAPair> fish_questions() {
  return {{"What animal is in the picture?", "Fish", QAKind::instance},
          {"How many lines are on the fish?", "3", QAKind::instance},
          {"Is the background white?", "Yes", QAKind::sketch},
          {"Is this a simple or a complex drawing?", "Simple", QAKind::sketch}};
}

/// Answers question i with the gold answer when script[i] is set, otherwise with a wrong one.
class ScriptedBackend : public VqaBackend {
 public:
  ScriptedBackend(const std::vector<QAPair>& qas, const std::vector<int>& script) {
    for (std::size_t i = 0; i < qas.size(); ++i) answers_[qas[i].question] = script[i] ? qas[i].answer : "no idea";
  }
  std::string answer(const Raster&, const std::string& q) override {
    ++calls;
    return answers_.at(q);
  }
  BackendInfo info() const override { return {"scripted", "1", 1}; }
  std::atomic<int> calls{0};

 private:
  std::map<std::string, std::string> answers_;
};

const Raster kImage(8, 8, 1);

TEST(NormalizeTest, MatchingRules) {
  EXPECT_EQ(answer_match("Fish", "fish"), 1);
  EXPECT_EQ(answer_match("three", "3"), 1);
  EXPECT_EQ(answer_match("blue", "blue and red"), 0);
  EXPECT_EQ(answer_match("  Yes. ", "yes"), 1);
  EXPECT_EQ(normalize_answer("Blue   and RED!"), "blue and red");
  EXPECT_THROW(answer_match("", "fish"), EmptyAnswer);
  EXPECT_THROW(answer_match("fish", " ? "), EmptyAnswer);
}

TEST(NormalizeTest, SymmetricAndIdempotent) {
  const std::vector<std::string> words = {"Fish", "fish.", "Three", "3", "yes", "No!", "blue and red", "Ten lines"};
  for (const auto& a : words) {
    EXPECT_EQ(normalize_answer(normalize_answer(a)), normalize_answer(a));
    for (const auto& b : words) EXPECT_EQ(answer_match(a, b), answer_match(b, a));
  }
}

TEST(TifaScoreTest, OracleWrongAndPartialBackends) {
  const auto qas = fish_questions();
  ScriptedBackend all(qas, {1, 1, 1, 1}), none(qas, {0, 0, 0, 0}), three(qas, {1, 0, 1, 1});
  EXPECT_EQ(tifa_score(all, kImage, qas), 1.0);
  EXPECT_EQ(tifa_score(none, kImage, qas), 0.0);
  EXPECT_EQ(tifa_score(three, kImage, qas), 0.75);
  ConstantBackend empty("");
  EXPECT_EQ(tifa_score(empty, kImage, qas), 0.0);
  EXPECT_THROW(tifa_score(all, kImage, {}), EmptyQASet);
}

TEST(TifaScoreTest, EqualsBruteForceCountOnRandomFixtures) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<QAPair> qas;
    std::vector<int> script;
    for (std::size_t i = 0; i < n; ++i) {
      qas.push_back({"q" + std::to_string(i), "a" + std::to_string(rng() % 5), rng() % 2 ? QAKind::sketch : QAKind::instance});
      script.push_back(static_cast<int>(rng() % 2));
    }
    ScriptedBackend b(qas, script);
    int correct = 0;
    for (int s : script) correct += s;
    EXPECT_EQ(tifa_score(b, kImage, qas), static_cast<double>(correct) / static_cast<double>(n));
  }
}

TEST(RewardTest, BlendArithmetic) {
  EXPECT_EQ(blend_reward(1.0, 0.5, 0.5), 0.75);
  EXPECT_EQ(blend_reward(0.3, 0.9, 1.0), 0.3);
  EXPECT_THROW(blend_reward(1.0, 1.0, 1.5), InvalidRange);
  EXPECT_THROW(blend_reward(1.0, 1.0, -0.1), InvalidRange);
}

TEST(RewardTest, FishFixtureAllCorrect) {
  const auto qas = fish_questions();
  ScriptedBackend b(qas, {1, 1, 1, 1});
  const RewardReport r = vqa_reward(b, kImage, qas, 0.5);
  EXPECT_EQ(r.r_instance, 1.0);
  EXPECT_EQ(r.r_sketch, 1.0);
  EXPECT_EQ(r.r_vqa, 1.0);
  EXPECT_EQ(r.records.size(), 4u);
}

TEST(RewardTest, AlphaOneIgnoresSketchAnswers) {
  const auto qas = fish_questions();
  ScriptedBackend b(qas, {1, 0, 0, 0});
  EXPECT_EQ(vqa_reward(b, kImage, qas, 1.0).r_vqa, 0.5);
}

TEST(RewardTest, AffineInAlphaAndMonotoneInVerdicts) {
  const auto qas = fish_questions();
  for (int mask = 0; mask < 16; ++mask) {
    std::vector<int> script{mask & 1, (mask >> 1) & 1, (mask >> 2) & 1, (mask >> 3) & 1};
    ScriptedBackend b(qas, script);
    const RewardReport base = vqa_reward(b, kImage, qas, 0.0);
    for (double alpha : {0.1, 0.25, 0.5, 0.9}) {
      const RewardReport r = vqa_reward(b, kImage, qas, alpha);
      EXPECT_NEAR(r.r_vqa, base.r_vqa + alpha * (r.r_instance - r.r_sketch), 1e-15);
      for (std::size_t i = 0; i < script.size(); ++i) {
        if (script[i]) continue;
        auto flipped = script;
        flipped[i] = 1;
        ScriptedBackend fb(qas, flipped);
        EXPECT_GE(vqa_reward(fb, kImage, qas, alpha).r_vqa, r.r_vqa);
      }
    }
  }
}

TEST(RewardTest, MissingKindAndFallback) {
  std::vector<QAPair> only_instance = {fish_questions()[0], fish_questions()[1]};
  ScriptedBackend b(only_instance, {1, 0});
  EXPECT_THROW(vqa_reward(b, kImage, only_instance, 0.5), MissingKind);
  const RewardReport r = vqa_reward_or_fallback(b, kImage, only_instance, 0.5);
  EXPECT_EQ(r.r_vqa, 0.5);
  ASSERT_TRUE(r.fallback_kind.has_value());
  EXPECT_EQ(*r.fallback_kind, QAKind::instance);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("records").size(), 2u);
}

TEST(BackendTest, TableOracleAndFallbacks) {
  TableBackend t("t");
  t.set("What animal is in the picture?", "Fish");
  Raster other(8, 8, 1, 0);
  t.set(other, "What animal is in the picture?", "Cat");
  EXPECT_EQ(t.answer(kImage, "What animal is in the picture?"), "Fish");
  EXPECT_EQ(t.answer(other, "What animal is in the picture?"), "Cat");
  EXPECT_THROW(t.answer(kImage, "unknown"), BackendFailure);
  TableBackend lenient("t", "dunno");
  EXPECT_EQ(lenient.answer(kImage, "unknown"), "dunno");
}

TEST(BackendTest, HeuristicReadsPixelStatistics) {
  HeuristicBackend h;
  EXPECT_EQ(h.answer(Raster(16, 16, 1), "Is the background white?"), "yes");
  EXPECT_EQ(h.answer(Raster(16, 16, 3, 200), "Is the background white?"), "no");
  EXPECT_EQ(h.answer(Raster(16, 16, 1), "Is the drawing colored?"), "no");
  EXPECT_EQ(h.answer(Raster(16, 16, 1, 120), "Is there shading in the drawing?"), "yes");
  EXPECT_EQ(h.answer(Raster(16, 16, 1), "What animal is this?"), "unknown");
}

TEST(BackendTest, CacheAnswersEachUniqueQueryOnce) {
  const auto qas = fish_questions();
  ScriptedBackend inner(qas, {1, 1, 0, 1});
  CachedBackend cache(inner);
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w)
    workers.emplace_back([&] {
      for (int rep = 0; rep < 5; ++rep) score_questions(cache, kImage, qas);
    });
  for (auto& t : workers) t.join();
  EXPECT_EQ(cache.hits() + cache.misses(), 80u);
  EXPECT_GE(cache.misses(), 4u);
  EXPECT_LE(inner.calls, 16);
  EXPECT_EQ(tifa_score(cache, kImage, qas), 0.75);
}

TEST(AccuracyTest, ScriptedSubsetGivesExactPercentage) {
  // 1,000 questions over 250 records; the backend answers a fixed 614 of them correctly.
  sketchtune::testing::TempDir dir("accuracy");
  write_png(dir / "x.png", Raster(8, 8, 1));
  DatasetManifest m;
  m.base_dir = dir.path();
  TableBackend backend("scripted", "wrong");
  int asked = 0;
  for (int r = 0; r < 250; ++r) {
    SketchRecord rec{"fish_" + std::to_string(r), "x.png", "Fish", "Animals", r % 3 ? Polarity::positive : Polarity::negative,
                     "c", {}, {}};
    for (int k = 0; k < 4; ++k, ++asked) {
      const std::string q = "question " + std::to_string(asked);
      rec.qa.push_back({q, "gold", k < 2 ? QAKind::instance : QAKind::sketch});
      if (asked < 614) backend.set(q, "Gold.");
    }
    m.records.push_back(std::move(rec));
  }
  const AccuracyReport rep = eval_backend_accuracy(backend, m);
  EXPECT_EQ(rep.overall.total, 1000u);
  EXPECT_EQ(rep.overall.correct, 614u);
  EXPECT_DOUBLE_EQ(rep.overall.accuracy(), 0.614);
  std::size_t sum = 0;
  for (const auto& [k, cell] : rep.by_polarity_kind) sum += cell.total;
  EXPECT_EQ(sum, 1000u);
  EXPECT_EQ(to_json(rep).at("overall").at("correct"), 614);

  auto oracle = oracle_backend(m);
  EXPECT_EQ(eval_backend_accuracy(*oracle, m).overall.accuracy(), 1.0);
  EXPECT_THROW(eval_backend_accuracy(backend, DatasetManifest{}), EmptyQASet);
}

TEST(QaFileTest, LoadsQuestionArray) {
  sketchtune::testing::TempDir dir("qa");
  std::ofstream(dir / "qa.json") << R"([{"q":"Is the background white?","a":"Yes","kind":"sketch"},{"q":"What animal?","a":"Fish","kind":"instance"}])";
  const auto qas = load_qa_file(dir / "qa.json");
  ASSERT_EQ(qas.size(), 2u);
  EXPECT_EQ(qas[0].kind, QAKind::sketch);
  EXPECT_EQ(qas[1].answer, "Fish");
}

class HttpBackendTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/answer", [this](const httplib::Request& req, httplib::Response& res) {
      if (failures_left_.fetch_sub(1) > 0) {
        res.status = 503;
        return;
      }
      if (!req.has_file("image") || !req.has_file("question")) {
        res.status = 400;
        return;
      }
      const std::string& png = req.get_file_value("image").content;
      const auto img = decode_png(std::span(reinterpret_cast<const std::uint8_t*>(png.data()), png.size()));
      const std::string q = req.get_file_value("question").content;
      res.set_content(nlohmann::json{{"answer", q + " " + std::to_string(img.width())}}.dump(), "application/json");
    });
    server_.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.set_content("<html>", "text/html"); });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  HttpBackendOptions options(const std::string& path = "/answer") {
    HttpBackendOptions o;
    o.port = port_;
    o.path = path;
    o.timeout_seconds = 5;
    return o;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> failures_left_{0};
};

TEST_F(HttpBackendTest, PostsImageAndQuestion) {
  HttpBackend b(options());
  EXPECT_EQ(b.answer(Raster(12, 12, 1), "size?"), "size? 12");
  EXPECT_EQ(b.info().max_in_flight, 4);
}

TEST_F(HttpBackendTest, RetriesServerErrors) {
  failures_left_ = 2;
  HttpBackend b(options());
  EXPECT_EQ(b.answer(kImage, "q"), "q 8");
  failures_left_ = 5;
  EXPECT_THROW(b.answer(kImage, "q"), BackendFailure);
}

TEST_F(HttpBackendTest, MalformedReplyIsABackendFailure) {
  HttpBackend b(options("/broken"));
  EXPECT_THROW(b.answer(kImage, "q"), BackendFailure);
  HttpBackend missing(options("/nothing-here"));
  EXPECT_THROW(missing.answer(kImage, "q"), BackendFailure);
}

}  // namespace
}  // namespace sketchtune
