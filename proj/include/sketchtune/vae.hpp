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

#ifndef SKETCHTUNE_VAE_HPP_
#define SKETCHTUNE_VAE_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sketchtune/autodiff.hpp"
#include "sketchtune/checkpoint.hpp"
#include "sketchtune/dataset.hpp"
#include "sketchtune/error.hpp"
#include "sketchtune/perceptual.hpp"

namespace sketchtune {

// Reductions: every loss is a mean over batch and elements, except KL which sums latent
// dimensions and averages over the batch.

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar recon_loss(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& xhat) {
  if (x.rows() != xhat.rows() || x.cols() != xhat.cols()) throw ShapeMismatch("recon_loss: shapes differ");
  if (x.size() == 0) return typename DerivedA::Scalar(0);
  return (x - xhat).squaredNorm() / static_cast<typename DerivedA::Scalar>(x.size());
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar recon_loss_l1(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& xhat) {
  if (x.rows() != xhat.rows() || x.cols() != xhat.cols()) throw ShapeMismatch("recon_loss: shapes differ");
  if (x.size() == 0) return typename DerivedA::Scalar(0);
  return (x - xhat).cwiseAbs().sum() / static_cast<typename DerivedA::Scalar>(x.size());
}

/// KL(N(mean, exp(logvar)) || N(0, I)); columns are samples.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar kl_loss(const Eigen::MatrixBase<DerivedA>& mean, const Eigen::MatrixBase<DerivedB>& log_variance) {
  using Scalar = typename DerivedA::Scalar;
  if (mean.rows() != log_variance.rows() || mean.cols() != log_variance.cols())
    throw ShapeMismatch("kl_loss: mean and log-variance shapes differ");
  if (!mean.allFinite() || !log_variance.allFinite()) throw NonFinite("kl_loss: non-finite posterior");
  if (mean.cols() == 0) return Scalar(0);
  const auto lv = log_variance.array();
  const Scalar total = Scalar(0.5) * (mean.array().square() + lv.exp() - Scalar(1) - lv).sum();
  return total / static_cast<Scalar>(mean.cols());
}

/// Diagonal Gaussian q(z|x); both matrices are (latent_dim, batch).
struct LatentPosterior {
  ad::Matrix mean;
  ad::Matrix log_variance;
};

inline double kl_loss(const LatentPosterior& p) { return kl_loss(p.mean, p.log_variance); }

enum class ReconNorm { L2, L1 };

struct VaeLossConfig {
  bool use_recon = true;
  double kl_weight = 0.0;
  double lpips_weight = 0.1;
  ReconNorm recon_norm = ReconNorm::L2;

  /// MSE + 0.1 * LPIPS, no KL.
  static VaeLossConfig recommended() { return {}; }
  void validate() const;
};

struct VaeLossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double lpips = 0.0;
  double total = 0.0;
};

/// Components are only evaluated when their weight is non-zero (LPIPS needs an extractor then).
VaeLossBreakdown vae_loss(const ad::Matrix& x, const ad::Matrix& xhat, const LatentPosterior& posterior,
                          const VaeLossConfig& cfg, const PerceptualExtractor* extractor);

struct VaeLossVars {
  ad::Var total;
  VaeLossBreakdown parts;
};

VaeLossVars vae_loss(ad::Tape& tape, ad::Var x, ad::Var xhat, ad::Var mean, ad::Var log_variance,
                     const VaeLossConfig& cfg, const PerceptualExtractor* extractor);

ad::Var kl_loss(ad::Var mean, ad::Var log_variance);

struct AutoencoderConfig {
  int image_size = 64;
  int hidden = 256;
  /// Latent is a latent_side x latent_side single-channel map.
  int latent_side = 8;
  std::uint64_t seed = 0;

  int pixels() const { return image_size * image_size; }
  int latent_dim() const { return latent_side * latent_side; }
};

/// Fully connected VAE: pixels -> hidden -> (mean, logvar) and latent -> hidden -> sigmoid pixels.
class ToyAutoencoder {
 public:
  ToyAutoencoder() = default;
  explicit ToyAutoencoder(const AutoencoderConfig& cfg);

  const AutoencoderConfig& config() const { return cfg_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  struct EncodedVars {
    ad::Var mean;
    ad::Var log_variance;
  };
  EncodedVars encode(ad::Tape& tape, ad::Var x);
  ad::Var decode(ad::Tape& tape, ad::Var z);

  LatentPosterior encode(const ad::Matrix& x) const;
  ad::Matrix decode(const ad::Matrix& z) const;
  /// Deterministic reconstruction through the posterior mean.
  ad::Matrix reconstruct(const ad::Matrix& x) const;

  Checkpoint to_checkpoint() const;
  static ToyAutoencoder from_checkpoint(const Checkpoint& ckpt);

 private:
  AutoencoderConfig cfg_;
  ad::ParameterSet params_;
  std::size_t enc_w_, enc_b_, mu_w_, mu_b_, lv_w_, lv_b_, dec_w1_, dec_b1_, dec_w2_, dec_b2_;
};

struct VaeTrainOptions {
  int epochs = 15;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  /// Save a checkpoint every n epochs (0 disables periodic checkpoints).
  int checkpoint_interval = 0;
  std::optional<std::filesystem::path> checkpoint_dir;
};

struct VaeEpochMetrics {
  int epoch = 0;
  double mse = 0.0;
  double lpips = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct VaeTrainResult {
  VaeEpochMetrics initial;
  std::vector<VaeEpochMetrics> trace;
  ToyAutoencoder model;
  std::vector<std::filesystem::path> checkpoints;
};

/// Full-data evaluation through the posterior mean.
VaeEpochMetrics evaluate_vae(const ToyAutoencoder& model, const ad::Matrix& data, const VaeLossConfig& cfg,
                             const PerceptualExtractor& extractor, int epoch = 0);

/// data is (pixels, n) in [0,1]. Throws DivergenceDetected on a non-finite loss after writing the
/// last good parameters to checkpoint_dir/last_good.ckpt when a directory is configured.
VaeTrainResult train_vae(const ad::Matrix& data, const VaeLossConfig& cfg, const AutoencoderConfig& arch,
                         const VaeTrainOptions& options, const PerceptualExtractor& extractor);

/// Luma images of the manifest as a (size*size, n) matrix in [0,1].
ad::Matrix load_image_matrix(const DatasetManifest& m, int size, bool positives_only = true);

std::string metric_trace_csv(const std::vector<VaeEpochMetrics>& trace);

}  // namespace sketchtune

#endif  // SKETCHTUNE_VAE_HPP_
