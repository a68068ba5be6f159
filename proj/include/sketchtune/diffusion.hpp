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

#ifndef SKETCHTUNE_DIFFUSION_HPP_
#define SKETCHTUNE_DIFFUSION_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sketchtune/autodiff.hpp"
#include "sketchtune/checkpoint.hpp"
#include "sketchtune/error.hpp"

namespace sketchtune {

enum class ScheduleKind { linear };

/// DDPM variance schedule. Step t runs 1..T; arrays are stored at index t-1.
struct NoiseSchedule {
  int steps = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  Eigen::VectorXd betas;
  Eigen::VectorXd alpha_bars;
  /// beta~_t = beta_t (1 - abar_{t-1}) / (1 - abar_t); zero at t = 1.
  Eigen::VectorXd posterior_variances;

  double beta(int t) const { return betas(check(t) - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  /// abar_0 = 1.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars(check(t) - 1); }
  double posterior_variance(int t) const { return posterior_variances(check(t) - 1); }

 private:
  int check(int t) const {
    if (t < 1 || t > steps) throw StepOutOfRange("step " + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]");
    return t;
  }
};

NoiseSchedule make_schedule(int steps, ScheduleKind kind, double beta_min, double beta_max);

/// Closed-form forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
template <typename DerivedX, typename DerivedE>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, Eigen::Dynamic> add_noise(
    const Eigen::MatrixBase<DerivedX>& x0, const Eigen::MatrixBase<DerivedE>& eps, int t, const NoiseSchedule& s) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw ShapeMismatch("add_noise: x0 and eps differ in shape");
  if (t < 1 || t > s.steps) throw StepOutOfRange("add_noise: step " + std::to_string(t) + " out of range");
  const double abar = s.alpha_bar(t);
  return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

/// Analytic posterior mean of q(x_{t-1} | x_t, x0).
template <typename DerivedT, typename Derived0>
Eigen::Matrix<typename DerivedT::Scalar, Eigen::Dynamic, Eigen::Dynamic> posterior_mean(
    const Eigen::MatrixBase<DerivedT>& x_t, const Eigen::MatrixBase<Derived0>& x0, int t, const NoiseSchedule& s) {
  const double abar = s.alpha_bar(t), abar_prev = s.alpha_bar(t - 1), beta = s.beta(t);
  return (std::sqrt(abar_prev) * beta / (1.0 - abar)) * x0 + (std::sqrt(1.0 - beta) * (1.0 - abar_prev) / (1.0 - abar)) * x_t;
}

/// Sum over elements of log N(x; mean, variance I). A zero variance is only allowed when x == mean,
/// in which case the deterministic step contributes 0.
template <typename DerivedX, typename DerivedM>
double step_log_prob(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedM>& mean, double variance) {
  if (x.rows() != mean.rows() || x.cols() != mean.cols()) throw ShapeMismatch("step_log_prob: shapes differ");
  if (variance < 0.0) throw DegenerateVariance("negative variance");
  const double sq = (x - mean).squaredNorm();
  if (variance == 0.0) {
    if (sq != 0.0) throw DegenerateVariance("zero variance with x != mean");
    return 0.0;
  }
  const double n = static_cast<double>(x.size());
  return -0.5 * sq / variance - 0.5 * n * std::log(2.0 * std::numbers::pi * variance);
}

/// Bag-of-tokens prompt embedding: one column per token, shape (dim, tokens).
struct ConditionEmbedding {
  std::string prompt;
  ad::Matrix tokens;
};

/// Hashes lowercase alphanumeric tokens to fixed-seed Gaussian vectors.
class HashedTextEncoder {
 public:
  explicit HashedTextEncoder(int dim = 16, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  ConditionEmbedding embed(const std::string& prompt) const;
  /// Mean of the token vectors.
  Eigen::VectorXd pooled(const std::string& prompt) const;

  static std::vector<std::string> tokenize(const std::string& prompt);

 private:
  int dim_;
  std::uint64_t seed_;
};

struct DenoiserConfig {
  /// Input is a side x side single-channel map.
  int side = 8;
  int channels = 32;
  int embed_dim = 16;
  int time_dim = 16;
  std::uint64_t seed = 0;

  int positions() const { return side * side; }
};

/// Noise predictor eps_theta(x_t, t, c): conv -> FiLM(time, attention-pooled prompt) -> SiLU ->
/// conv -> SiLU -> conv. Inputs are (side*side, batch).
class ToyDenoiser {
 public:
  ToyDenoiser() = default;
  explicit ToyDenoiser(const DenoiserConfig& cfg);

  const DenoiserConfig& config() const { return cfg_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  /// tokens[b] must outlive the tape.
  ad::Var predict(ad::Tape& tape, ad::Var x_t, const std::vector<int>& steps,
                  const std::vector<const ad::Matrix*>& tokens);
  ad::Matrix predict(const ad::Matrix& x_t, const std::vector<int>& steps,
                     const std::vector<const ad::Matrix*>& tokens) const;

  Checkpoint to_checkpoint() const;
  static ToyDenoiser from_checkpoint(const Checkpoint& ckpt, const std::string& prefix = "");

 private:
  ad::Matrix time_embedding(const std::vector<int>& steps) const;

  DenoiserConfig cfg_;
  ad::ParameterSet params_;
  std::size_t conv1_w_, conv1_b_, scale_t_, scale_c_, scale_b_, shift_t_, shift_c_, shift_b_, conv2_w_, conv2_b_,
      conv3_w_, conv3_b_, query_;
};

/// Mean squared error between eps and eps_theta(x_t, t, c) with t ~ U{1..T}, eps ~ N(0, I) drawn
/// from seed. x0 is (dim, batch); tokens has one entry per column.
double denoising_loss(const ToyDenoiser& model, const ad::Matrix& x0, const std::vector<const ad::Matrix*>& tokens,
                      const NoiseSchedule& s, std::uint64_t seed);
ad::Var denoising_loss(ad::Tape& tape, ToyDenoiser& model, const ad::Matrix& x0,
                       const std::vector<const ad::Matrix*>& tokens, const NoiseSchedule& s, std::uint64_t seed);

/// DDPM mean from a noise estimate: (x_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t).
ad::Matrix eps_to_mean(const ad::Matrix& x_t, const ad::Matrix& eps_hat, int t, const NoiseSchedule& s);

struct ReverseStep {
  ad::Matrix x_prev;
  ad::Matrix mean;
  double variance = 0.0;
};

/// One ancestral step; the t = 1 step returns the mean without noise.
ReverseStep reverse_step(const ToyDenoiser& model, const ad::Matrix& x_t, int t, const ad::Matrix& tokens,
                         const NoiseSchedule& s, const ad::Matrix& noise);

/// Ordered reverse-process record. states.col(0) is x_T and states.col(T) is x_0; step statistics
/// are indexed by k = T - t (so column k describes the transition x_t -> x_{t-1}).
struct DiffusionTrajectory {
  std::string prompt;
  std::uint64_t seed = 0;
  int steps = 0;
  ad::Matrix states;
  ad::Matrix means;
  Eigen::VectorXd variances;
  Eigen::VectorXd log_probs;

  int step_at(int k) const { return steps - k; }
  /// Sum of log-probs over stochastic steps (t >= 2).
  double total_log_prob() const;
};

struct SampleResult {
  ad::Matrix latent;
  DiffusionTrajectory trajectory;
};

/// T reverse steps from x_T ~ N(0, I), all noise drawn from seed.
SampleResult sample(const ToyDenoiser& model, const ConditionEmbedding& cond, const NoiseSchedule& s,
                    std::uint64_t seed);

/// Per-step log pi_theta(x_{t-1} | x_t) recomputed from stored states under the current parameters.
Eigen::VectorXd recompute_log_probs(const ToyDenoiser& model, const DiffusionTrajectory& traj, const ad::Matrix& tokens,
                                    const NoiseSchedule& s);

inline constexpr std::uint32_t kTrajectoryVersion = 1;
void save_trajectory(const std::filesystem::path& path, const DiffusionTrajectory& traj);
DiffusionTrajectory load_trajectory(const std::filesystem::path& path);

struct DenoiserTrainOptions {
  int epochs = 20;
  int batch_size = 20;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
};

/// Fits eps_theta on (latent, prompt) pairs; returns the mean loss per epoch.
std::vector<double> train_denoiser(ToyDenoiser& model, const ad::Matrix& latents, const std::vector<ad::Matrix>& tokens,
                                   const NoiseSchedule& s, const DenoiserTrainOptions& options);

Json schedule_json(const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const Json& j);

}  // namespace sketchtune

#endif  // SKETCHTUNE_DIFFUSION_HPP_
