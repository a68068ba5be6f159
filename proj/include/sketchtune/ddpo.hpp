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

#ifndef SKETCHTUNE_DDPO_HPP_
#define SKETCHTUNE_DDPO_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sketchtune/diffusion.hpp"
#include "sketchtune/optim.hpp"
#include "sketchtune/vqa.hpp"

namespace sketchtune {

/// A caption to sample from, with the QA set used to score its images.
struct PromptSpec {
  std::string id;
  std::string prompt;
  std::vector<QAPair> qa;
};

/// Scores a decoded image for a prompt; must return a value in [0,1].
using RewardFn = std::function<double(const Raster& image, const PromptSpec& prompt)>;
/// Maps a final latent (one column) to an image.
using LatentDecoder = std::function<Raster(const ad::Matrix& latent)>;

/// Blended VQA reward, falling back to the available kind when one is missing.
RewardFn vqa_reward_fn(VqaBackend& backend, double alpha);
/// Fraction of luma pixels at or above the threshold.
double whiteness(const Raster& image, int threshold = 230);
RewardFn whiteness_reward_fn(int threshold = 230);

/// Treats a side*side latent in [-1,1] as a grayscale image.
LatentDecoder pixel_decoder(int side);

struct Rollout {
  DiffusionTrajectory trajectory;
  std::string prompt_id;
  std::size_t prompt_index = 0;
  double reward = 0.0;
  double advantage = 0.0;
};

struct DdpoConfig {
  int rollouts_per_prompt = 4;
  int prompts_per_update = 2;
  int updates = 200;
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  double alpha = 0.5;
  double epsilon = 1e-6;
  int checkpoint_interval = 50;
  std::uint64_t seed = 0;

  /// Throws ConfigInvalid naming the first offending field.
  void validate() const;
};

/// Welford accumulation of rewards per prompt id.
class PerPromptStats {
 public:
  void update(const std::string& prompt_id, double reward);
  void clear() { cells_.clear(); }
  std::size_t count(const std::string& prompt_id) const;
  double mean(const std::string& prompt_id) const;
  /// Population variance.
  double variance(const std::string& prompt_id) const;
  double stddev(const std::string& prompt_id) const;

 private:
  struct Cell {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
  };
  std::map<std::string, Cell> cells_;
};

struct RolloutBatch {
  std::vector<Rollout> rollouts;
  /// Rollouts whose scoring raised BackendFailure, with the message.
  std::vector<std::pair<std::string, std::string>> dropped;
};

/// Samples cfg.rollouts_per_prompt trajectories for each selected prompt and scores the final
/// images. The seed of rollout k of prompt p at update u is derived from (cfg.seed, u, p, k).
RolloutBatch collect_rollouts(const ToyDenoiser& model, const std::vector<PromptSpec>& prompts,
                              const std::vector<std::size_t>& selected, const HashedTextEncoder& encoder,
                              const LatentDecoder& decode, const RewardFn& reward, const NoiseSchedule& schedule,
                              const DdpoConfig& cfg, long long update);

/// advantage = (reward - mean) / (std + eps), zero for prompts whose std is zero.
void normalize_advantages(std::vector<Rollout>& rollouts, const PerPromptStats& stats, double epsilon);

/// weight * sum_j (x_prev_j - mean_j)^2 / (2 variance_j), summed over rows. With weight equal to
/// the advantage this is -advantage * log pi up to a parameter-free constant.
ad::Var reinforce_surrogate(ad::Var mean, const ad::Matrix& x_prev, const Eigen::VectorXd& variances, double weight);

/// Mean policy-gradient estimate of a one-step Gaussian policy N(theta, sigma^2 I) with raw
/// returns, evaluated through reinforce_surrogate.
Eigen::VectorXd estimate_policy_gradient(const Eigen::VectorXd& theta, double sigma,
                                         const std::function<double(const Eigen::VectorXd&)>& reward, int samples,
                                         std::uint64_t seed);

struct PolicyStepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  bool skipped = false;
  std::string reason;
};

/// Recomputes every stochastic step under the current parameters, backpropagates the averaged
/// surrogate, clips and applies one Adam step. Zero signal or a non-finite gradient skips the update.
PolicyStepResult policy_gradient_step(ToyDenoiser& model, Adam& optimizer, const std::vector<Rollout>& rollouts,
                                      const std::vector<PromptSpec>& prompts, const HashedTextEncoder& encoder,
                                      const NoiseSchedule& schedule, const DdpoConfig& cfg);

struct RewardCurveRow {
  long long update = 0;
  std::string prompt_id;
  double mean_reward = 0.0;
  double std_reward = 0.0;
};

struct DdpoRunOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::optional<std::filesystem::path> resume_from;
  /// Merged into the metadata of every checkpoint written.
  Json extra_meta = Json::object();
  /// Called after each update with the batch mean reward.
  std::function<void(long long update, double mean_reward, const PolicyStepResult&)> on_update;
};

struct DdpoResult {
  std::vector<RewardCurveRow> curve;
  /// Mean reward over all rollouts of each update.
  std::vector<double> mean_rewards;
  std::vector<std::filesystem::path> checkpoints;
  std::size_t dropped = 0;
  std::size_t skipped_updates = 0;
};

/// Runs cfg.updates rounds of collect, normalize, update. Prompts are visited round-robin,
/// cfg.prompts_per_update per round.
DdpoResult train_ddpo(ToyDenoiser& model, const std::vector<PromptSpec>& prompts, const HashedTextEncoder& encoder,
                      const LatentDecoder& decode, const RewardFn& reward, const NoiseSchedule& schedule,
                      const DdpoConfig& cfg, const DdpoRunOptions& options = {});

std::string reward_curve_csv(const std::vector<RewardCurveRow>& rows);
/// Line plot of per-prompt mean reward against update.
Raster reward_curve_plot(const std::vector<RewardCurveRow>& rows, int width = 480, int height = 320);

}  // namespace sketchtune

#endif  // SKETCHTUNE_DDPO_HPP_
