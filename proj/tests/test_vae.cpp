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

#include "sketchtune/error.hpp"
#include "sketchtune/image.hpp"
#include "sketchtune/perceptual.hpp"
#include "sketchtune/synthetic.hpp"
#include "sketchtune/vae.hpp"
#include "test_support.hpp"

namespace sketchtune {
namespace {

Eigen::MatrixXd uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return u(rng); });
}

Eigen::MatrixXd normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return n(rng); });
}

TEST(ReconLossTest, IdentityAndUnitOffset) {
  const Eigen::MatrixXd x = uniform(16, 4, 1);
  EXPECT_EQ(recon_loss(x, x), 0.0);
  EXPECT_DOUBLE_EQ(recon_loss(Eigen::MatrixXd::Zero(16, 4), Eigen::MatrixXd::Ones(16, 4)), 1.0);
  EXPECT_THROW(recon_loss(x, Eigen::MatrixXd::Zero(16, 3)), ShapeMismatch);
}

TEST(ReconLossTest, MatchesElementwiseLoop) {
  const Eigen::MatrixXd a = uniform(37, 5, 2), b = uniform(37, 5, 3);
  double acc = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) acc += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  EXPECT_NEAR(recon_loss(a, b), acc / static_cast<double>(a.size()), 1e-12);
}

TEST(KlLossTest, ClosedFormCases) {
  EXPECT_EQ(kl_loss(Eigen::MatrixXd::Zero(4, 3), Eigen::MatrixXd::Zero(4, 3)), 0.0);
  EXPECT_DOUBLE_EQ(kl_loss(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Zero(1, 1)), 0.5);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(0, 0) = std::nan("");
  EXPECT_THROW(kl_loss(bad, Eigen::MatrixXd::Zero(2, 2)), NonFinite);
}

TEST(KlLossTest, AgreesWithMonteCarloEstimate) {
  // E_q[log q(z) - log p(z)] over 100k draws of a 3-dim diagonal posterior.
  const Eigen::Vector3d mu(0.8, -1.2, 0.3), lv(-0.5, 0.4, -1.1);
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n(0.0, 1.0);
  const int draws = 100000;
  double acc = 0;
  for (int k = 0; k < draws; ++k) {
    for (int d = 0; d < 3; ++d) {
      const double e = n(rng);
      const double z = mu(d) + std::exp(0.5 * lv(d)) * e;
      acc += (-0.5 * lv(d) - 0.5 * e * e) - (-0.5 * z * z);
    }
  }
  const double mc = acc / draws;
  EXPECT_NEAR(kl_loss(Eigen::MatrixXd(mu), Eigen::MatrixXd(lv)), mc, 0.01 * std::abs(mc));
}

class PerceptualTest : public ::testing::Test {
 protected:
  PerceptualExtractor ex = PerceptualExtractor::toy(16, 16, 9, {4, 6, 8}, {0.5, 0.3, 0.2});
};

TEST_F(PerceptualTest, SelfDistanceIsZeroAndSymmetric) {
  const Eigen::MatrixXd a = uniform(256, 3, 4), b = uniform(256, 3, 5);
  EXPECT_EQ(lpips_loss(a, a, ex), 0.0);
  EXPECT_NEAR(lpips_loss(a, b, ex), lpips_loss(b, a, ex), 1e-15);
}

TEST_F(PerceptualTest, WeightedSumOfNormalizedFeatureDistances) {
  const Eigen::MatrixXd a = uniform(256, 2, 6), b = uniform(256, 2, 7);
  const auto fa = ex.features(a), fb = ex.features(b);
  ASSERT_EQ(fa.size(), 3u);
  double expected = 0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    for (Eigen::Index j = 0; j < fa[l].cols(); ++j)
      EXPECT_NEAR(fa[l].col(j).norm(), 1.0, 1e-6);
    expected += ex.layer_weights()[l] * (fa[l] - fb[l]).colwise().squaredNorm().mean();
  }
  EXPECT_NEAR(lpips_loss(a, b, ex), expected, 1e-6);
}

TEST_F(PerceptualTest, FixedSeedGivesFixedFeatures) {
  const auto other = PerceptualExtractor::toy(16, 16, 9, {4, 6, 8}, {0.5, 0.3, 0.2});
  const Eigen::MatrixXd a = uniform(256, 1, 8);
  EXPECT_EQ(ex.pooled_features(a), other.pooled_features(a));
}

TEST(VaeLossTest, ComponentIdentities) {
  const auto ex = PerceptualExtractor::toy(8, 8, 3, {4, 4, 4});
  const Eigen::MatrixXd x = uniform(64, 3, 1), xh = uniform(64, 3, 2);
  const LatentPosterior zero{Eigen::MatrixXd::Zero(4, 3), Eigen::MatrixXd::Zero(4, 3)};
  const LatentPosterior post{normal(4, 3, 3), normal(4, 3, 4, 0.3)};

  EXPECT_EQ(vae_loss(x, x, post, VaeLossConfig::recommended(), &ex).total, 0.0);

  VaeLossConfig beta1;
  beta1.kl_weight = 1.0;
  beta1.lpips_weight = 0.0;
  EXPECT_EQ(vae_loss(x, xh, zero, beta1, nullptr).total, recon_loss(x, xh));

  VaeLossConfig tiny = beta1;
  tiny.kl_weight = 1e-6;
  EXPECT_NEAR(vae_loss(x, xh, post, tiny, nullptr).total, recon_loss(x, xh) + 1e-6 * kl_loss(post), 1e-12);

  // Total is affine in the perceptual weight with slope equal to the LPIPS term.
  VaeLossConfig lam = VaeLossConfig::recommended();
  const double lp = lpips_loss(x, xh, ex);
  for (double l : {0.0, 0.1, 0.5, 2.0}) {
    lam.lpips_weight = l;
    EXPECT_NEAR(vae_loss(x, xh, post, lam, &ex).total, recon_loss(x, xh) + l * lp, 1e-12);
  }
}

TEST(VaeLossTest, PerceptualTermNeedsAnExtractor) {
  const Eigen::MatrixXd x = uniform(64, 1, 1);
  const LatentPosterior p{Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Zero(4, 1)};
  EXPECT_THROW(vae_loss(x, x, p, VaeLossConfig::recommended(), nullptr), ExtractorUnavailable);
  VaeLossConfig neg;
  neg.kl_weight = -1;
  EXPECT_THROW(neg.validate(), InvalidArgument);
}

struct GradCase {
  const char* name;
  double kl_weight;
  double lpips_weight;
};

class VaeGradientTest : public ::testing::TestWithParam<GradCase> {};

TEST_P(VaeGradientTest, TapeMatchesCentralDifferences) {
  const GradCase gc = GetParam();
  AutoencoderConfig arch;
  arch.image_size = 8;
  arch.hidden = 4;
  arch.latent_side = 2;
  arch.seed = 17;
  ToyAutoencoder model(arch);
  ASSERT_LE(model.params().scalar_count(), 1000);
  const auto ex = PerceptualExtractor::toy(8, 8, 5, {4, 4, 4});
  const Eigen::MatrixXd x = uniform(64, 3, 21);
  const Eigen::MatrixXd eps = normal(4, 3, 22);
  VaeLossConfig cfg;
  cfg.kl_weight = gc.kl_weight;
  cfg.lpips_weight = gc.lpips_weight;
  auto loss = [&](ad::Tape& tape) {
    ad::Var xv = tape.constant(x);
    auto enc = model.encode(tape, xv);
    ad::Var z = ad::add(enc.mean, ad::cwise_mul(ad::exp(ad::scale(enc.log_variance, 0.5)), tape.constant(eps)));
    return vae_loss(tape, xv, model.decode(tape, z), enc.mean, enc.log_variance, cfg, &ex).total;
  };
  const auto res = sketchtune::testing::check_gradients(model.params(), loss);
  EXPECT_EQ(res.checked, model.params().scalar_count());
  EXPECT_LT(res.max_rel_error, 1e-4) << gc.name << " worst coordinate " << res.worst;
}

INSTANTIATE_TEST_SUITE_P(LossConfigs, VaeGradientTest,
                         ::testing::Values(GradCase{"default", 0.0, 0.1}, GradCase{"beta_1", 1.0, 0.0},
                                           GradCase{"beta_0_1", 0.1, 0.0}, GradCase{"beta_1e_6", 1e-6, 0.0}),
                         [](const auto& info) { return std::string(info.param.name); });

Eigen::MatrixXd small_sketches(int n, int size, std::uint64_t seed) {
  SyntheticOptions o;
  o.positive_originals = static_cast<std::size_t>(n);
  o.size = size;
  o.seed = seed;
  const auto recs = make_synthetic_originals(o);
  Eigen::MatrixXd data(size * size, n);
  for (int i = 0; i < n; ++i) data.col(i) = unit_column(recs[static_cast<std::size_t>(i)].second);
  return data;
}

TEST(VaeTrainTest, DefaultConfigImprovesBothMetrics) {
  const Eigen::MatrixXd data = small_sketches(40, 16, 2);
  const auto ex = PerceptualExtractor::toy(16, 16, 3);
  AutoencoderConfig arch;
  arch.image_size = 16;
  arch.hidden = 64;
  arch.latent_side = 4;
  arch.seed = 1;
  VaeTrainOptions opts;
  opts.epochs = 6;
  opts.seed = 2;
  const auto tuned = train_vae(data, VaeLossConfig::recommended(), arch, opts, ex);
  ASSERT_EQ(tuned.trace.size(), 6u);
  EXPECT_LT(tuned.trace.back().mse, tuned.initial.mse);
  EXPECT_LT(tuned.trace.back().lpips, tuned.initial.lpips);

  VaeLossConfig beta1;
  beta1.kl_weight = 1.0;
  beta1.lpips_weight = 0.0;
  const auto collapsed = train_vae(data, beta1, arch, opts, ex);
  EXPECT_GT(collapsed.trace.back().mse, tuned.trace.back().mse);
}

TEST(VaeTrainTest, ZeroEpochsKeepsInitialization) {
  const Eigen::MatrixXd data = small_sketches(8, 8, 1);
  const auto ex = PerceptualExtractor::toy(8, 8, 3, {4, 4, 4});
  AutoencoderConfig arch;
  arch.image_size = 8;
  arch.hidden = 8;
  arch.latent_side = 2;
  arch.seed = 5;
  VaeTrainOptions opts;
  opts.epochs = 0;
  const auto res = train_vae(data, VaeLossConfig::recommended(), arch, opts, ex);
  EXPECT_TRUE(res.trace.empty());
  EXPECT_EQ(res.model.params().flat_values(), ToyAutoencoder(arch).params().flat_values());
}

TEST(VaeCheckpointTest, RoundTripPreservesReconstruction) {
  AutoencoderConfig arch;
  arch.image_size = 8;
  arch.hidden = 8;
  arch.latent_side = 2;
  arch.seed = 3;
  const ToyAutoencoder model(arch);
  sketchtune::testing::TempDir dir("vae");
  save_checkpoint(dir / "m.ckpt", model.to_checkpoint());
  const ToyAutoencoder back = ToyAutoencoder::from_checkpoint(load_checkpoint(dir / "m.ckpt"));
  const Eigen::MatrixXd x = uniform(64, 2, 9);
  EXPECT_EQ(back.reconstruct(x), model.reconstruct(x));
}

TEST(VaeTraceTest, CsvHasTheDocumentedColumns) {
  const std::string csv = metric_trace_csv({{1, 0.5, 0.25, 0.0, 0.525}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,mse,lpips,kl,total");
}

}  // namespace
}  // namespace sketchtune
