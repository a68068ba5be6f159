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
#include <fstream>
#include <numeric>
#include <random>

#include "sketchtune/error.hpp"
#include "sketchtune/eval.hpp"
#include "sketchtune/synthetic.hpp"
#include "test_support.hpp"

namespace sketchtune {
namespace {

Eigen::MatrixXd normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(mean, sd);
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return n(rng); });
}

TEST(GaussianFitTest, UnbiasedMomentsAndMinimumSize) {
  Eigen::MatrixXd x(1, 3);
  x << 1, 2, 6;
  const auto g = fit_gaussian(x);
  EXPECT_DOUBLE_EQ(g.mean(0), 3.0);
  EXPECT_DOUBLE_EQ(g.covariance(0, 0), (4.0 + 1.0 + 9.0) / 2.0);
  EXPECT_THROW(fit_gaussian(Eigen::MatrixXd::Zero(2, 1)), InsufficientData);
}

TEST(FidTest, SelfDistanceIsZero) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FeatureSet x{"f", normal(1 + static_cast<Eigen::Index>(seed % 12), 40, seed)};
    EXPECT_LE(std::abs(fid(x, x)), 1e-6) << seed;
  }
}

TEST(FidTest, SymmetricAndOrderFree) {
  const FeatureSet a{"f", normal(6, 50, 1)}, b{"f", normal(6, 60, 2, 0.3, 1.4)};
  EXPECT_NEAR(fid(a, b), fid(b, a), 1e-6);
  FeatureSet shuffled = a;
  std::vector<Eigen::Index> order(50);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(3));
  for (Eigen::Index j = 0; j < 50; ++j) shuffled.features.col(j) = a.features.col(order[static_cast<std::size_t>(j)]);
  EXPECT_NEAR(fid(shuffled, b), fid(a, b), 1e-9);
  EXPECT_GE(fid(a, b), 0.0);
}

TEST(FidTest, OneDimensionalClosedForm) {
  const double m1 = 0.5, s1 = 1.0, m2 = -0.7, s2 = 2.0;
  const Eigen::Index n = 20000;
  const FeatureSet a{"f", normal(1, n, 10, m1, s1)}, b{"f", normal(1, n, 11, m2, s2)};
  const auto ga = fit_gaussian(a.features), gb = fit_gaussian(b.features);
  const double sa = std::sqrt(ga.covariance(0, 0)), sb = std::sqrt(gb.covariance(0, 0));
  // Exact on the fitted moments.
  EXPECT_NEAR(fid(a, b), std::pow(ga.mean(0) - gb.mean(0), 2) + std::pow(sa - sb, 2), 1e-9);
  // Against the population parameters within four standard errors of the leading terms.
  const double se_mean = std::sqrt((s1 * s1 + s2 * s2) / static_cast<double>(n));
  const double se_sd = std::sqrt((s1 * s1 + s2 * s2) / (2.0 * static_cast<double>(n)));
  const double tol = 4.0 * (2 * std::abs(m1 - m2) * se_mean + 2 * std::abs(s1 - s2) * se_sd);
  EXPECT_NEAR(fid(a, b), std::pow(m1 - m2, 2) + std::pow(s1 - s2, 2), tol);
}

TEST(FidTest, SingularCovariancesStayFinite) {
  // Rank-deficient features: 5 dims but only 3 samples.
  const FeatureSet a{"f", normal(5, 3, 1)}, b{"f", normal(5, 3, 2)};
  bool regularized = false;
  const double d = frechet_distance(fit_gaussian(a.features), fit_gaussian(b.features), &regularized);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_GE(d, 0.0);
}

TEST(FidTest, InputErrors) {
  EXPECT_THROW(fid({"f", normal(3, 10, 1)}, {"f", normal(4, 10, 2)}), DimensionMismatch);
  EXPECT_THROW(fid({"f", normal(3, 1, 1)}, {"f", normal(3, 10, 2)}), InsufficientData);
}

TEST(ClipAlignmentTest, IdenticalOrthogonalAndHandComputed) {
  const Eigen::MatrixXd a = normal(8, 5, 1);
  EXPECT_NEAR(clip_alignment(a, a), 100.0, 1e-9);
  EXPECT_NEAR(clip_alignment(Eigen::MatrixXd::Identity(4, 2), Eigen::MatrixXd::Identity(4, 2).rowwise().reverse()), 0.0, 1e-12);
  const Eigen::MatrixXd b = normal(8, 5, 2);
  double acc = 0;
  for (int j = 0; j < 5; ++j) {
    double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < 8; ++i) {
      dot += a(i, j) * b(i, j);
      na += a(i, j) * a(i, j);
      nb += b(i, j) * b(i, j);
    }
    acc += std::max(0.0, dot / std::sqrt(na * nb)) * 100.0;
  }
  EXPECT_NEAR(clip_alignment(a, b), acc / 5.0, 1e-9);
  EXPECT_THROW(clip_alignment(Eigen::MatrixXd::Zero(8, 1), a.leftCols(1)), ZeroVector);
  EXPECT_THROW(clip_alignment(a, normal(7, 5, 3)), DimensionMismatch);
}

class EvaluateRunTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SyntheticOptions o;
    o.positive_originals = 12;
    o.negative_originals = 6;
    o.size = 16;
    o.seed = 4;
    ref = write_synthetic_dataset(dir.path() / "ref", o);
    std::filesystem::create_directories(dir / "gen");
    for (const auto& r : ref.records) std::filesystem::copy_file(ref.image_path(r), dir / "gen" / (r.id + ".png"));
    for (const auto& r : ref.records)
      for (const auto& q : r.qa) oracle.set_by_digest(digest_of(r), q.question, q.answer);
  }
  std::string digest_of(const SketchRecord& r) { return image_digest(read_png(ref.image_path(r))); }

  sketchtune::testing::TempDir dir{"eval"};
  DatasetManifest ref;
  TableBackend oracle{"oracle"};
};

TEST_F(EvaluateRunTest, SelfComparisonWithOracle) {
  EvalOptions opts;
  opts.backend = &oracle;
  opts.bootstrap_resamples = 20;
  const EvalReport rep = evaluate_run(dir / "gen", ref, opts);
  EXPECT_TRUE(rep.errors.empty());
  EXPECT_EQ(rep.sample_ids.size(), ref.records.size());
  EXPECT_LE(rep.metrics.at("fid").mean, 1e-6);
  EXPECT_EQ(rep.metrics.at("tifa").mean, 1.0);
  EXPECT_EQ(rep.metrics.at("tifa").std, 0.0);
  EXPECT_GE(rep.metrics.at("clip").mean, 0.0);
  EXPECT_LE(rep.metrics.at("clip").mean, 100.0);
  EXPECT_FALSE(rep.per_class.empty());
  EXPECT_TRUE(rep.macro.count("tifa"));
  const std::string md = to_markdown(rep);
  EXPECT_NE(md.find("FID"), std::string::npos);
  EXPECT_EQ(to_json(rep).at("metrics").at("tifa").at("mean"), 1.0);
}

TEST_F(EvaluateRunTest, UnreadableImageIsSkipped) {
  std::ofstream(dir / "gen" / (ref.records[0].id + ".png"), std::ios::trunc) << "garbage";
  std::ofstream(dir / "gen" / "stranger.png") << "x";
  EvalOptions opts;
  opts.metrics = {"fid", "clip"};
  opts.bootstrap_resamples = 5;
  const EvalReport rep = evaluate_run(dir / "gen", ref, opts);
  EXPECT_EQ(rep.skipped.size(), 2u);
  EXPECT_EQ(rep.sample_ids.size(), ref.records.size() - 1);
  EXPECT_TRUE(rep.metrics.count("fid"));
  EXPECT_FALSE(rep.metrics.count("tifa"));
}

TEST_F(EvaluateRunTest, AggregatesAreMeansOfStoredSamples) {
  HeuristicBackend heuristic;
  EvalOptions opts;
  opts.backend = &heuristic;
  opts.metrics = {"tifa", "clip"};
  const EvalReport rep = evaluate_run(dir / "gen", ref, opts);
  const auto& tifa = rep.metrics.at("tifa");
  ASSERT_EQ(tifa.samples.size(), rep.sample_ids.size());
  double sum = 0;
  for (std::size_t j = 0; j < rep.sample_ids.size(); ++j) {
    const SketchRecord* r = ref.find(rep.sample_ids[j]);
    const double independent = tifa_score(heuristic, read_png(dir / "gen" / (r->id + ".png")), r->qa);
    EXPECT_EQ(tifa.samples[j], independent);
    sum += independent;
  }
  EXPECT_NEAR(tifa.mean, sum / static_cast<double>(tifa.samples.size()), 1e-15);
  EXPECT_NEAR(tifa.std, population_std(tifa.samples), 1e-15);
  const auto& clip = rep.metrics.at("clip");
  EXPECT_NEAR(clip.mean, std::accumulate(clip.samples.begin(), clip.samples.end(), 0.0) / clip.samples.size(), 1e-12);
}

TEST_F(EvaluateRunTest, MissingBackendIsRecordedNotFatal) {
  EvalOptions opts;
  opts.metrics = {"tifa", "clip"};
  const EvalReport rep = evaluate_run(dir / "gen", ref, opts);
  EXPECT_TRUE(rep.errors.count("tifa"));
  EXPECT_TRUE(rep.metrics.count("clip"));
}

}  // namespace
}  // namespace sketchtune
