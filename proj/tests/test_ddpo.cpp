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

#include <cmath>
#include <random>

#include "sketchtune/ddpo.hpp"
#include "sketchtune/error.hpp"
#include "test_support.hpp"

namespace sketchtune {
namespace {

DenoiserConfig tiny_denoiser(std::uint64_t seed = 3) {
  DenoiserConfig c;
  c.side = 4;
  c.channels = 4;
  c.embed_dim = 4;
  c.time_dim = 4;
  c.seed = seed;
  return c;
}

std::vector<PromptSpec> two_prompts() {
  const std::vector<QAPair> qa = {{"Is the background white?", "yes", QAKind::sketch},
                                  {"What is in the picture?", "fish", QAKind::instance}};
  return {{"fish_1", "a simple drawing of a fish", qa}, {"cat_1", "a simple drawing of a cat", qa}};
}

class DdpoFixture : public ::testing::Test {
 protected:
  NoiseSchedule schedule = make_schedule(8, ScheduleKind::linear, 1e-3, 0.2);
  ToyDenoiser model{tiny_denoiser()};
  HashedTextEncoder encoder{4, 1};
  LatentDecoder decode = pixel_decoder(4);
  std::vector<PromptSpec> prompts = two_prompts();

  DdpoConfig config(int rollouts = 3) const {
    DdpoConfig c;
    c.rollouts_per_prompt = rollouts;
    c.prompts_per_update = 2;
    c.updates = 4;
    c.seed = 5;
    c.learning_rate = 1e-2;
    return c;
  }
};

TEST(DdpoConfigTest, RejectsNonPositiveFields) {
  DdpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epsilon = 0;
  EXPECT_THROW(c.validate(), ConfigInvalid);
  c = {};
  c.rollouts_per_prompt = 0;
  EXPECT_THROW(c.validate(), ConfigInvalid);
  c = {};
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), ConfigInvalid);
}

TEST(RewardFnTest, WhitenessAndPixelDecoder) {
  Raster img(4, 4, 1, 0);
  img.planes[0].row(0).setConstant(255);
  EXPECT_EQ(whiteness(img), 0.25);
  ad::Matrix latent = ad::Matrix::Constant(16, 1, 1.0);
  EXPECT_EQ(whiteness(pixel_decoder(4)(latent)), 1.0);
  latent.setConstant(-1.0);
  EXPECT_EQ(whiteness(pixel_decoder(4)(latent)), 0.0);
}

TEST_F(DdpoFixture, RolloutsCarryOneLogProbPerStep) {
  ConstantBackend yes("yes");
  const auto batch = collect_rollouts(model, prompts, {0, 1}, encoder, decode, vqa_reward_fn(yes, 0.5), schedule,
                                      config(3), 0);
  ASSERT_EQ(batch.rollouts.size(), 6u);
  for (const auto& r : batch.rollouts) {
    EXPECT_EQ(r.trajectory.log_probs.size(), schedule.steps);
    EXPECT_GE(r.reward, 0.0);
    EXPECT_LE(r.reward, 1.0);
  }
  EXPECT_EQ(batch.rollouts[0].prompt_id, "fish_1");
  EXPECT_EQ(batch.rollouts[3].prompt_id, "cat_1");
  EXPECT_NE(batch.rollouts[0].trajectory.seed, batch.rollouts[1].trajectory.seed);
}

TEST_F(DdpoFixture, OracleAndWrongBackendsGiveFlatRewards) {
  TableBackend oracle("oracle");
  for (const auto& p : prompts)
    for (const auto& q : p.qa) oracle.set(q.question, q.answer);
  auto batch = collect_rollouts(model, prompts, {0, 1}, encoder, decode, vqa_reward_fn(oracle, 0.5), schedule, config(), 0);
  for (const auto& r : batch.rollouts) EXPECT_EQ(r.reward, 1.0);

  ConstantBackend wrong("purple");
  batch = collect_rollouts(model, prompts, {0, 1}, encoder, decode, vqa_reward_fn(wrong, 0.5), schedule, config(), 0);
  PerPromptStats stats;
  for (const auto& r : batch.rollouts) {
    EXPECT_EQ(r.reward, 0.0);
    stats.update(r.prompt_id, r.reward);
  }
  normalize_advantages(batch.rollouts, stats, 1e-6);
  for (const auto& r : batch.rollouts) EXPECT_EQ(r.advantage, 0.0);
}

TEST_F(DdpoFixture, FailedQueriesDropRolloutsAndBadRewardsThrow) {
  TableBackend strict("strict");
  auto batch = collect_rollouts(model, prompts, {0}, encoder, decode, vqa_reward_fn(strict, 0.5), schedule, config(), 0);
  EXPECT_TRUE(batch.rollouts.empty());
  EXPECT_EQ(batch.dropped.size(), 3u);
  const RewardFn out_of_range = [](const Raster&, const PromptSpec&) { return 1.5; };
  EXPECT_THROW(collect_rollouts(model, prompts, {0}, encoder, decode, out_of_range, schedule, config(), 0), InvalidRange);
}

TEST(AdvantageTest, TwoPointRewards) {
  std::vector<Rollout> rs(2);
  rs[0].prompt_id = rs[1].prompt_id = "p";
  rs[0].reward = 0.0;
  rs[1].reward = 1.0;
  PerPromptStats stats;
  for (const auto& r : rs) stats.update(r.prompt_id, r.reward);
  const double eps = 1e-6;
  normalize_advantages(rs, stats, eps);
  // mean 0.5, population std 0.5.
  EXPECT_NEAR(rs[0].advantage, -0.5 / (0.5 + eps), 1e-15);
  EXPECT_NEAR(rs[1].advantage, 0.5 / (0.5 + eps), 1e-15);
  EXPECT_LT(rs[0].advantage, 0.0);
  EXPECT_GT(rs[1].advantage, 0.0);
}

TEST(AdvantageTest, MatchesHandComputedStatistics) {
  const std::vector<double> a = {0.1, 0.4, 0.35, 0.9}, b = {0.6, 0.2, 0.75};
  std::vector<Rollout> rs;
  PerPromptStats stats;
  for (double r : a) rs.push_back({{}, "a", 0, r, 0});
  for (double r : b) rs.push_back({{}, "b", 1, r, 0});
  for (const auto& r : rs) stats.update(r.prompt_id, r.reward);
  normalize_advantages(rs, stats, 1e-6);
  auto check = [&](const std::vector<double>& v, std::size_t offset) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    EXPECT_NEAR(stats.mean(rs[offset].prompt_id), mean, 1e-12);
    EXPECT_NEAR(stats.stddev(rs[offset].prompt_id), sd, 1e-12);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(rs[offset + i].advantage, (v[i] - mean) / (sd + 1e-6), 1e-12);
  };
  check(a, 0);
  check(b, a.size());
}

TEST(AdvantageTest, EqualRewardsGiveZero) {
  std::vector<Rollout> rs(3);
  PerPromptStats stats;
  for (auto& r : rs) {
    r.prompt_id = "p";
    r.reward = 0.42;
    stats.update("p", 0.42);
  }
  normalize_advantages(rs, stats, 1e-6);
  for (const auto& r : rs) EXPECT_EQ(r.advantage, 0.0);
  EXPECT_GE(stats.variance("p"), 0.0);
}

TEST(SurrogateTest, GradientIsLinearInTheWeight) {
  const ad::Matrix mu0 = ad::Matrix::Random(5, 3), x = ad::Matrix::Random(5, 3);
  const Eigen::VectorXd var = Eigen::VectorXd::LinSpaced(3, 0.1, 0.4);
  auto grad = [&](double w) {
    ad::ParameterSet ps;
    ps.add("mu", mu0);
    ad::Tape tape;
    tape.backward(reinforce_surrogate(tape.parameter(ps[0]), x, var, w));
    return ad::Matrix(ps[0].grad);
  };
  const ad::Matrix g1 = grad(0.7), g2 = grad(1.4);
  EXPECT_LT((g2 - 2.0 * g1).cwiseAbs().maxCoeff(), 1e-14);
  // d/dmu of w (x - mu)^2 / (2 var) is -w (x - mu) / var.
  ad::Matrix expected = -0.7 * (x - mu0);
  for (int k = 0; k < 3; ++k) expected.col(k) /= var(k);
  EXPECT_LT((g1 - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EstimatorTest, GaussianToyPolicyMatchesAnalyticGradient) {
  // Reward -|a - c|^2 under a ~ N(theta, sigma^2 I): grad J = -2 (theta - c).
  const Eigen::Vector2d theta(0.5, -1.0), c(-1.0, 0.5);
  const auto reward = [&](const Eigen::VectorXd& a) { return -(a - c).squaredNorm(); };
  const Eigen::VectorXd g = estimate_policy_gradient(theta, 1.0, reward, 50000, 2024);
  const Eigen::Vector2d analytic = -2.0 * (theta - c);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(g(i), analytic(i), 0.05 * std::abs(analytic(i))) << i;
}

TEST_F(DdpoFixture, ZeroAdvantagesLeaveParametersUnchanged) {
  ConstantBackend yes("yes");
  auto batch = collect_rollouts(model, prompts, {0, 1}, encoder, decode, vqa_reward_fn(yes, 0.5), schedule, config(), 0);
  for (auto& r : batch.rollouts) r.advantage = 0.0;
  const Eigen::VectorXd before = model.params().flat_values();
  Adam adam(model.params(), {1e-2});
  const auto res = policy_gradient_step(model, adam, batch.rollouts, prompts, encoder, schedule, config());
  EXPECT_TRUE(res.skipped);
  EXPECT_EQ(model.params().flat_values(), before);
}

TEST_F(DdpoFixture, DoubledAdvantagesDoubleTheGradient) {
  auto batch = collect_rollouts(model, prompts, {0, 1}, encoder, decode, whiteness_reward_fn(), schedule, config(), 0);
  for (std::size_t i = 0; i < batch.rollouts.size(); ++i) batch.rollouts[i].advantage = 1e-4 * (static_cast<double>(i) - 2.5);
  auto norm_for = [&](double factor) {
    ToyDenoiser copy = model;
    Adam adam(copy.params(), {1e-2});
    auto rs = batch.rollouts;
    for (auto& r : rs) r.advantage *= factor;
    DdpoConfig cfg = config();
    cfg.clip_norm = 1e9;
    return policy_gradient_step(copy, adam, rs, prompts, encoder, schedule, cfg).grad_norm;
  };
  const double g1 = norm_for(1.0), g2 = norm_for(2.0);
  ASSERT_GT(g1, 0.0);
  EXPECT_NEAR(g2 / g1, 2.0, 1e-9);
}

TEST_F(DdpoFixture, ConstantRewardNeverMovesTheModel) {
  TableBackend oracle("oracle");
  for (const auto& p : prompts)
    for (const auto& q : p.qa) oracle.set(q.question, q.answer);
  const Eigen::VectorXd before = model.params().flat_values();
  const auto res = train_ddpo(model, prompts, encoder, decode, vqa_reward_fn(oracle, 0.5), schedule, config());
  EXPECT_EQ(model.params().flat_values(), before);
  EXPECT_EQ(res.skipped_updates, 4u);
  for (double r : res.mean_rewards) EXPECT_EQ(r, 1.0);
}

TEST_F(DdpoFixture, ResumeReproducesTheUninterruptedRun) {
  sketchtune::testing::TempDir dir("ddpo");
  DdpoConfig cfg = config(3);
  cfg.updates = 6;
  cfg.checkpoint_interval = 3;
  ToyDenoiser straight = model;
  DdpoRunOptions opts;
  opts.checkpoint_dir = dir / "a";
  const auto full = train_ddpo(straight, prompts, encoder, decode, whiteness_reward_fn(), schedule, cfg, opts);
  ASSERT_EQ(full.checkpoints.size(), 2u);

  ToyDenoiser resumed = model;
  DdpoRunOptions ropts;
  ropts.checkpoint_dir = dir / "b";
  ropts.resume_from = full.checkpoints.front();
  const auto tail = train_ddpo(resumed, prompts, encoder, decode, whiteness_reward_fn(), schedule, cfg, ropts);
  EXPECT_EQ(resumed.params().flat_values(), straight.params().flat_values());
  EXPECT_EQ(tail.mean_rewards, full.mean_rewards);
  EXPECT_EQ(reward_curve_csv(tail.curve), reward_curve_csv(full.curve));
}

TEST_F(DdpoFixture, CurveCsvAndPlot) {
  DdpoConfig cfg = config(2);
  cfg.updates = 3;
  const auto res = train_ddpo(model, prompts, encoder, decode, whiteness_reward_fn(), schedule, cfg);
  ASSERT_EQ(res.curve.size(), 6u);
  const std::string csv = reward_curve_csv(res.curve);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "update,prompt_id,mean_reward,std_reward");
  for (const auto& row : res.curve) {
    EXPECT_GE(row.mean_reward, 0.0);
    EXPECT_LE(row.mean_reward, 1.0);
  }
  const Raster plot = reward_curve_plot(res.curve, 200, 120);
  EXPECT_EQ(plot.width(), 200);
  EXPECT_EQ(plot.channels(), 3);
}

}  // namespace
}  // namespace sketchtune
