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

#include "sketchtune/eval.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "sketchtune/error.hpp"

namespace sketchtune {

GaussianFit fit_gaussian(const Eigen::MatrixXd& features) {
  if (features.cols() < 2) throw InsufficientData("need at least two feature vectors for a covariance");
  GaussianFit g;
  g.mean = features.rowwise().mean();
  const Eigen::MatrixXd centered = features.colwise() - g.mean;
  g.covariance = centered * centered.transpose() / static_cast<double>(features.cols() - 1);
  return g;
}

namespace {

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

namespace {

// Returns nullopt when an eigenvalue of the cross product falls below the clamp tolerance.
std::optional<double> try_frechet(const GaussianFit& a, const GaussianFit& b) {
  const Eigen::MatrixXd s1 = symmetric_sqrt(a.covariance);
  const Eigen::MatrixXd cross = s1 * b.covariance * s1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cross + cross.transpose()), Eigen::EigenvaluesOnly);
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double lambda = es.eigenvalues()(i);
    if (lambda < -1e-8) return std::nullopt;
    trace_sqrt += std::sqrt(std::max(0.0, lambda));
  }
  const double d = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_sqrt;
  return std::max(0.0, d);
}

}  // namespace

double frechet_distance(const GaussianFit& a, const GaussianFit& b, bool* regularized) {
  if (a.mean.size() != b.mean.size()) throw DimensionMismatch("Gaussians differ in dimension");
  if (regularized) *regularized = false;
  if (auto d = try_frechet(a, b)) return *d;
  if (regularized) *regularized = true;
  const auto eye = Eigen::MatrixXd::Identity(a.mean.size(), a.mean.size());
  GaussianFit ra{a.mean, a.covariance + 1e-6 * eye}, rb{b.mean, b.covariance + 1e-6 * eye};
  if (auto d = try_frechet(ra, rb)) return *d;
  throw NonFinite("covariance product stays indefinite after regularization");
}

double fid(const FeatureSet& real, const FeatureSet& gen) {
  if (real.dim() != gen.dim()) throw DimensionMismatch("feature sets differ in dimensionality");
  return frechet_distance(fit_gaussian(real.features), fit_gaussian(gen.features));
}

Eigen::VectorXd clip_alignment_terms(const Eigen::MatrixXd& image_embeds, const Eigen::MatrixXd& text_embeds) {
  if (image_embeds.rows() != text_embeds.rows() || image_embeds.cols() != text_embeds.cols())
    throw DimensionMismatch("image and text embeddings must pair up by column");
  Eigen::VectorXd out(image_embeds.cols());
  for (Eigen::Index j = 0; j < image_embeds.cols(); ++j) {
    const double ni = image_embeds.col(j).norm(), nt = text_embeds.col(j).norm();
    if (ni == 0.0 || nt == 0.0) throw ZeroVector("zero embedding at pair " + std::to_string(j));
    out(j) = std::max(0.0, image_embeds.col(j).dot(text_embeds.col(j)) / (ni * nt)) * 100.0;
  }
  return out;
}

double clip_alignment(const Eigen::MatrixXd& image_embeds, const Eigen::MatrixXd& text_embeds) {
  if (image_embeds.cols() == 0) throw InsufficientData("no embedding pairs");
  return clip_alignment_terms(image_embeds, text_embeds).mean();
}

ToyClip::ToyClip(const PerceptualExtractor& extractor, int dim, std::uint64_t seed)
    : extractor_(&extractor), dim_(dim), text_(dim, seed ^ 0x746578747ULL) {
  if (!extractor.available()) throw ExtractorUnavailable("ToyClip needs a feature extractor");
  const Eigen::Index in = extractor.pooled_features(Eigen::MatrixXd::Constant(
                                                        static_cast<Eigen::Index>(extractor.height()) * extractor.width(), 1, 1.0))
                              .rows();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  projection_.resize(dim, in);
  for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = normal(rng);
}

Eigen::MatrixXd ToyClip::embed_images(const Eigen::MatrixXd& pixels) const {
  return projection_ * extractor_->pooled_features(pixels);
}

Eigen::VectorXd ToyClip::embed_text(const std::string& text) const { return text_.pooled(text); }

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

namespace {

MetricSummary summarize(std::vector<double> samples, std::string method) {
  MetricSummary m;
  m.n = samples.size();
  double sum = 0.0;
  for (double x : samples) sum += x;
  m.mean = samples.empty() ? 0.0 : sum / static_cast<double>(samples.size());
  m.std = population_std(samples);
  m.method = std::move(method);
  m.samples = std::move(samples);
  return m;
}

}  // namespace

EvalReport evaluate_run(const std::filesystem::path& gen_dir, const DatasetManifest& ref, const EvalOptions& options) {
  if (ref.records.empty()) throw InsufficientData("reference manifest is empty");
  if (!std::filesystem::is_directory(gen_dir)) throw IoError("generated image directory not found: " + gen_dir.string());
  EvalReport report;

  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(gen_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  Eigen::Index side = 0;
  std::vector<const SketchRecord*> records;
  std::vector<Raster> gen_images;
  std::vector<Eigen::VectorXd> gen_cols, ref_cols;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    const SketchRecord* rec = ref.find(id);
    if (!rec) {
      report.skipped.push_back({f.filename().string(), "no reference record"});
      continue;
    }
    Raster gen, real;
    try {
      gen = read_png(f);
    } catch (const Error& e) {
      report.skipped.push_back({f.filename().string(), std::string("unreadable: ") + e.what()});
      continue;
    }
    try {
      real = read_png(ref.image_path(*rec));
    } catch (const Error& e) {
      report.skipped.push_back({f.filename().string(), std::string("reference unreadable: ") + e.what()});
      continue;
    }
    if (side == 0 && real.is_square()) side = real.height();
    if (!gen.is_square() || !real.is_square() || gen.height() != side || real.height() != side) {
      report.skipped.push_back({f.filename().string(), "size mismatch"});
      continue;
    }
    records.push_back(rec);
    gen_cols.push_back(unit_column(gen));
    ref_cols.push_back(unit_column(real));
    gen_images.push_back(std::move(gen));
    report.sample_ids.push_back(id);
  }

  const auto n = static_cast<Eigen::Index>(records.size());
  Eigen::MatrixXd gen_px(side * side, n), ref_px(side * side, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    gen_px.col(j) = gen_cols[static_cast<std::size_t>(j)];
    ref_px.col(j) = ref_cols[static_cast<std::size_t>(j)];
  }

  std::map<std::string, std::vector<double>> per_sample;
  std::optional<PerceptualExtractor> extractor;
  auto need_extractor = [&]() -> const PerceptualExtractor& {
    if (n == 0) throw InsufficientData("no evaluable samples");
    if (!extractor)
      extractor = PerceptualExtractor::toy(static_cast<int>(side), static_cast<int>(side), options.extractor_seed);
    return *extractor;
  };

  if (options.metrics.count("fid")) {
    try {
      const auto& e = need_extractor();
      const FeatureSet real{"toy-perceptual", e.pooled_features(ref_px)};
      const FeatureSet gen{"toy-perceptual", e.pooled_features(gen_px)};
      MetricSummary m;
      bool regularized = false;
      if (real.dim() != gen.dim()) throw DimensionMismatch("feature sets differ in dimensionality");
      m.mean = frechet_distance(fit_gaussian(real.features), fit_gaussian(gen.features), &regularized);
      if (regularized) report.metadata["fid_regularized"] = true;
      m.n = static_cast<std::size_t>(n);
      std::mt19937_64 rng(options.seed);
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      std::vector<double> boot;
      for (int b = 0; b < options.bootstrap_resamples; ++b) {
        Eigen::MatrixXd rb(real.dim(), n), gb(gen.dim(), n);
        for (Eigen::Index j = 0; j < n; ++j) {
          const Eigen::Index k = pick(rng);
          rb.col(j) = real.features.col(k);
          gb.col(j) = gen.features.col(k);
        }
        boot.push_back(frechet_distance(fit_gaussian(rb), fit_gaussian(gb)));
      }
      m.std = population_std(boot);
      m.method = "single FID over all samples; std from " + std::to_string(options.bootstrap_resamples) +
                 " paired bootstrap resamples";
      report.metrics["fid"] = m;
    } catch (const Error& e) {
      report.errors["fid"] = e.what();
    }
  }

  if (options.metrics.count("clip")) {
    try {
      const ToyClip clip(need_extractor(), 32, options.extractor_seed);
      const Eigen::MatrixXd img = clip.embed_images(gen_px);
      Eigen::MatrixXd txt(clip.dim(), n);
      for (Eigen::Index j = 0; j < n; ++j) txt.col(j) = clip.embed_text(records[static_cast<std::size_t>(j)]->caption);
      const Eigen::VectorXd terms = clip_alignment_terms(img, txt);
      std::vector<double> v(terms.data(), terms.data() + terms.size());
      per_sample["clip"] = v;
      report.metrics["clip"] = summarize(std::move(v), "mean of max(0, cos) x 100 over pairs; population std");
    } catch (const Error& e) {
      report.errors["clip"] = e.what();
    }
  }

  if (options.metrics.count("tifa")) {
    try {
      if (!options.backend) throw BackendFailure("no VQA backend configured");
      if (n == 0) throw InsufficientData("no evaluable samples");
      std::vector<double> v(static_cast<std::size_t>(n), std::nan(""));
      std::vector<double> present;
      for (std::size_t j = 0; j < records.size(); ++j) {
        if (records[j]->qa.empty()) continue;
        v[j] = tifa_score(*options.backend, gen_images[j], records[j]->qa);
        present.push_back(v[j]);
      }
      if (present.empty()) throw EmptyQASet("no paired record has QA pairs");
      per_sample["tifa"] = v;
      report.metrics["tifa"] = summarize(std::move(present), "mean of per-image TIFA scores; population std");
    } catch (const Error& e) {
      report.errors["tifa"] = e.what();
    }
  }

  std::map<std::string, std::map<std::string, std::vector<double>>> by_class;
  for (std::size_t j = 0; j < records.size(); ++j) {
    auto& cell = report.per_class[records[j]->class_name];
    ++cell.n;
    for (const auto& [metric, values] : per_sample)
      if (!std::isnan(values[j])) by_class[records[j]->class_name][metric].push_back(values[j]);
  }
  std::map<std::string, std::vector<double>> class_means;
  for (auto& [cls, metrics] : by_class)
    for (auto& [metric, values] : metrics) {
      double s = 0.0;
      for (double x : values) s += x;
      const double mean = s / static_cast<double>(values.size());
      report.per_class[cls].metrics[metric] = mean;
      class_means[metric].push_back(mean);
    }
  for (auto& [metric, means] : class_means) {
    double s = 0.0;
    for (double x : means) s += x;
    report.macro[metric] = s / static_cast<double>(means.size());
  }

  report.metadata.update(nlohmann::json{{"gen_dir", gen_dir.string()},
                     {"reference_records", ref.records.size()},
                     {"evaluated", n},
                     {"skipped", report.skipped.size()},
                     {"feature_extractor", "toy-perceptual"},
                     {"extractor_seed", options.extractor_seed},
                     {"bootstrap_resamples", options.bootstrap_resamples},
                     {"seed", options.seed}});
  if (options.backend) report.metadata["vqa_backend"] = options.backend->info().name;
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, m] : r.metrics)
    metrics[name] = {{"mean", m.mean}, {"std", m.std}, {"n", m.n}, {"method", m.method}, {"samples", m.samples}};
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, c] : r.per_class) per_class[cls] = {{"n", c.n}, {"metrics", c.metrics}};
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : r.skipped) skipped.push_back({{"file", s.file}, {"reason", s.reason}});
  return {{"metrics", metrics},   {"errors", r.errors},       {"per_class", per_class}, {"macro", r.macro},
          {"sample_ids", r.sample_ids}, {"skipped", skipped}, {"metadata", r.metadata}};
}

std::string to_markdown(const EvalReport& r) {
  static const std::map<std::string, std::string> kLabels = {
      {"fid", "FID (lower is better)"}, {"clip", "CLIP alignment (higher is better)"}, {"tifa", "TIFAScore (higher is better)"}};
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "| Metric | Mean ± std | n |\n|---|---|---|\n";
  for (const auto& [name, m] : r.metrics) {
    auto it = kLabels.find(name);
    out << "| " << (it == kLabels.end() ? name : it->second) << " | " << m.mean << " ± " << m.std << " | " << m.n << " |\n";
  }
  for (const auto& [name, msg] : r.errors) out << "| " << name << " | failed: " << msg << " | 0 |\n";
  if (!r.per_class.empty()) {
    std::vector<std::string> cols;
    for (const auto& [name, v] : r.macro) cols.push_back(name);
    out << "\n| Class | n |";
    for (const auto& c : cols) out << ' ' << c << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& [cls, c] : r.per_class) {
      out << "| " << cls << " | " << c.n << " |";
      for (const auto& name : cols) {
        auto it = c.metrics.find(name);
        if (it == c.metrics.end())
          out << " - |";
        else
          out << ' ' << it->second << " |";
      }
      out << '\n';
    }
    out << "| macro average | |";
    for (const auto& name : cols) out << ' ' << r.macro.at(name) << " |";
    out << '\n';
  }
  if (!r.skipped.empty()) {
    out << "\nSkipped " << r.skipped.size() << " sample(s):\n";
    for (const auto& s : r.skipped) out << "- " << s.file << ": " << s.reason << '\n';
  }
  return out.str();
}

}  // namespace sketchtune
