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

#ifndef SKETCHTUNE_VQA_HPP_
#define SKETCHTUNE_VQA_HPP_

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sketchtune/dataset.hpp"
#include "sketchtune/image.hpp"

namespace sketchtune {

struct BackendInfo {
  std::string name;
  std::string version;
  /// Upper bound on concurrent queries the backend accepts.
  int max_in_flight = 1;
};

/// Answers a free-form question about an image. Implementations must be deterministic per
/// (image, question) within a session.
class VqaBackend {
 public:
  virtual ~VqaBackend() = default;
  virtual std::string answer(const Raster& image, const std::string& question) = 0;
  virtual BackendInfo info() const = 0;
};

/// SHA-256 over dimensions and raw pixel planes.
std::string image_digest(const Raster& image);

/// Answers from a lookup table: (image digest, question) first, then question alone, then a
/// default answer. An empty default makes unknown queries fail with BackendFailure.
class TableBackend : public VqaBackend {
 public:
  explicit TableBackend(std::string name = "table", std::string fallback = "")
      : name_(std::move(name)), fallback_(std::move(fallback)) {}

  void set(const std::string& question, const std::string& answer) { by_question_[question] = answer; }
  void set(const Raster& image, const std::string& question, const std::string& answer);
  void set_by_digest(const std::string& digest, const std::string& question, const std::string& answer) {
    by_image_[{digest, question}] = answer;
  }

  std::string answer(const Raster& image, const std::string& question) override;
  BackendInfo info() const override { return {name_, "1", 64}; }

 private:
  std::string name_;
  std::string fallback_;
  std::map<std::pair<std::string, std::string>, std::string> by_image_;
  std::map<std::string, std::string> by_question_;
};

/// Table backend that returns the gold answer for every QA pair of every record.
std::unique_ptr<TableBackend> oracle_backend(const DatasetManifest& m);

class ConstantBackend : public VqaBackend {
 public:
  explicit ConstantBackend(std::string answer) : answer_(std::move(answer)) {}
  std::string answer(const Raster&, const std::string&) override { return answer_; }
  BackendInfo info() const override { return {"constant", "1", 64}; }

 private:
  std::string answer_;
};

/// Offline stand-in that answers the yes/no style questions (white background, colour, shading)
/// from pixel statistics and "unknown" to everything else.
class HeuristicBackend : public VqaBackend {
 public:
  std::string answer(const Raster& image, const std::string& question) override;
  BackendInfo info() const override { return {"heuristic", "1", 64}; }
};

/// Thread-safe memo of (image digest, question) -> answer in front of another backend.
class CachedBackend : public VqaBackend {
 public:
  explicit CachedBackend(VqaBackend& inner) : inner_(inner) {}
  std::string answer(const Raster& image, const std::string& question) override;
  BackendInfo info() const override { return inner_.info(); }
  std::size_t hits() const;
  std::size_t misses() const;

 private:
  VqaBackend& inner_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, std::string> memo_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

inline constexpr int kNormalizationVersion = 1;

/// Lowercase, trim, strip terminal punctuation, collapse whitespace, and map the number words
/// zero..ten to digits.
std::string normalize_answer(const std::string& text);

/// 1 when the normalized strings are equal. Throws EmptyAnswer on empty input.
int answer_match(const std::string& predicted, const std::string& gold);

struct QuestionVerdict {
  std::string question;
  std::string gold;
  std::string predicted;
  int correct = 0;
  QAKind kind = QAKind::instance;
};

/// Queries the backend once per question. An empty prediction counts as wrong.
std::vector<QuestionVerdict> score_questions(VqaBackend& backend, const Raster& image, const std::vector<QAPair>& qas);

/// Fraction of questions answered correctly. Throws EmptyQASet when qas is empty.
double tifa_score(VqaBackend& backend, const Raster& image, const std::vector<QAPair>& qas);

struct RewardReport {
  std::vector<QuestionVerdict> records;
  double r_instance = 0.0;
  double r_sketch = 0.0;
  double r_vqa = 0.0;
  double alpha = 0.5;
  /// Set when one kind was absent and the other kind's score stood in for the blend.
  std::optional<QAKind> fallback_kind;
};

double blend_reward(double r_instance, double r_sketch, double alpha);

/// Throws MissingKind when either kind has no questions and InvalidRange when alpha is outside [0,1].
RewardReport vqa_reward(VqaBackend& backend, const Raster& image, const std::vector<QAPair>& qas, double alpha);
RewardReport reward_from_verdicts(std::vector<QuestionVerdict> verdicts, double alpha);

/// As vqa_reward, but with a single available kind its score is used as the reward.
RewardReport vqa_reward_or_fallback(VqaBackend& backend, const Raster& image, const std::vector<QAPair>& qas,
                                    double alpha);

nlohmann::json to_json(const RewardReport& r);

struct AccuracyCell {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct AccuracyReport {
  std::string backend;
  AccuracyCell overall;
  std::map<std::string, AccuracyCell> by_polarity;
  std::map<std::string, AccuracyCell> by_kind;
  /// Keyed "polarity/kind".
  std::map<std::string, AccuracyCell> by_polarity_kind;
};

/// Asks every question of every record. Throws EmptyQASet when there is nothing to ask.
AccuracyReport eval_backend_accuracy(VqaBackend& backend, const DatasetManifest& testset);
nlohmann::json to_json(const AccuracyReport& r);

/// Reads a QA file: a JSON array of {"q", "a", "kind"} objects.
std::vector<QAPair> load_qa_file(const std::filesystem::path& path);

}  // namespace sketchtune

#endif  // SKETCHTUNE_VQA_HPP_
