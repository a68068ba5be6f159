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

#ifndef SKETCHTUNE_EVAL_HPP_
#define SKETCHTUNE_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sketchtune/dataset.hpp"
#include "sketchtune/diffusion.hpp"
#include "sketchtune/perceptual.hpp"
#include "sketchtune/vqa.hpp"

namespace sketchtune {

/// Per-image feature vectors, one column per image.
struct FeatureSet {
  std::string extractor_id;
  Eigen::MatrixXd features;

  Eigen::Index dim() const { return features.rows(); }
  Eigen::Index count() const { return features.cols(); }
};

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Sample mean and unbiased covariance. Needs at least two columns.
GaussianFit fit_gaussian(const Eigen::MatrixXd& features);

/// Squared Frechet distance between two Gaussians. The cross term is the trace of the symmetric
/// square root of S1^{1/2} S2 S1^{1/2}; eigenvalues down to -1e-8 are treated as zero. Below that
/// the covariances are retried with 1e-6 I added and *regularized is set.
double frechet_distance(const GaussianFit& a, const GaussianFit& b, bool* regularized = nullptr);

/// Throws DimensionMismatch on differing dimensionality and InsufficientData below two vectors.
double fid(const FeatureSet& real, const FeatureSet& gen);

/// Mean over columns of max(0, cos) * 100. Throws ZeroVector and DimensionMismatch.
double clip_alignment(const Eigen::MatrixXd& image_embeds, const Eigen::MatrixXd& text_embeds);
/// The per-pair values behind clip_alignment.
Eigen::VectorXd clip_alignment_terms(const Eigen::MatrixXd& image_embeds, const Eigen::MatrixXd& text_embeds);

/// Offline stand-in for a joint image/text embedder: a fixed random projection of pooled
/// perceptual features and a hashed bag-of-tokens text vector of the same width.
class ToyClip {
 public:
  ToyClip(const PerceptualExtractor& extractor, int dim = 32, std::uint64_t seed = 0);
  Eigen::MatrixXd embed_images(const Eigen::MatrixXd& pixels) const;
  Eigen::VectorXd embed_text(const std::string& text) const;
  int dim() const { return dim_; }

 private:
  const PerceptualExtractor* extractor_;
  int dim_;
  HashedTextEncoder text_;
  Eigen::MatrixXd projection_;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  std::string method;
  /// Values the mean and std were computed from (empty for FID).
  std::vector<double> samples;
};

struct SkippedSample {
  std::string file;
  std::string reason;
};

struct ClassBreakdown {
  std::size_t n = 0;
  std::map<std::string, double> metrics;
};

struct EvalReport {
  std::map<std::string, MetricSummary> metrics;
  std::map<std::string, std::string> errors;
  std::map<std::string, ClassBreakdown> per_class;
  /// Mean of per-class means, per metric.
  std::map<std::string, double> macro;
  std::vector<std::string> sample_ids;
  std::vector<SkippedSample> skipped;
  nlohmann::json metadata = nlohmann::json::object();
};

struct EvalOptions {
  std::set<std::string> metrics = {"fid", "clip", "tifa"};
  VqaBackend* backend = nullptr;
  int bootstrap_resamples = 100;
  std::uint64_t seed = 0;
  std::uint64_t extractor_seed = 0;
};

/// Pairs <gen_dir>/<record id>.png with reference records and computes the selected metrics.
/// Unreadable or unmatched files are skipped and listed; a failing metric is recorded in errors.
EvalReport evaluate_run(const std::filesystem::path& gen_dir, const DatasetManifest& ref, const EvalOptions& options);

/// Population standard deviation.
double population_std(const std::vector<double>& v);

nlohmann::json to_json(const EvalReport& r);
std::string to_markdown(const EvalReport& r);

}  // namespace sketchtune

#endif  // SKETCHTUNE_EVAL_HPP_
