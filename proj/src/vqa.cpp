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

#include "sketchtune/vqa.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include "sketchtune/digest.hpp"
#include "sketchtune/error.hpp"

namespace sketchtune {

std::string image_digest(const Raster& image) {
  std::string buf;
  buf += std::to_string(image.height()) + "x" + std::to_string(image.width()) + "x" + std::to_string(image.channels());
  for (const auto& p : image.planes) buf.append(reinterpret_cast<const char*>(p.data()), static_cast<std::size_t>(p.size()));
  return sha256_hex(std::string_view(buf));
}

void TableBackend::set(const Raster& image, const std::string& question, const std::string& answer) {
  by_image_[{image_digest(image), question}] = answer;
}

std::string TableBackend::answer(const Raster& image, const std::string& question) {
  if (!by_image_.empty()) {
    auto it = by_image_.find({image_digest(image), question});
    if (it != by_image_.end()) return it->second;
  }
  if (auto it = by_question_.find(question); it != by_question_.end()) return it->second;
  if (fallback_.empty()) throw BackendFailure(name_ + ": no answer for '" + question + "'");
  return fallback_;
}

std::unique_ptr<TableBackend> oracle_backend(const DatasetManifest& m) {
  auto b = std::make_unique<TableBackend>("oracle");
  for (const auto& r : m.records) {
    const std::string digest = image_digest(read_png(m.image_path(r)));
    for (const auto& qa : r.qa) b->set_by_digest(digest, qa.question, qa.answer);
  }
  return b;
}

std::string HeuristicBackend::answer(const Raster& image, const std::string& question) {
  if (image.empty()) throw BackendFailure("heuristic backend got an empty image");
  std::string q;
  for (char c : question) q.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  const auto y = image.luma().cast<int>();
  const double n = static_cast<double>(y.size());
  if (q.find("background") != std::string::npos && q.find("white") != std::string::npos)
    return static_cast<double>((y >= 230).count()) / n > 0.6 ? "yes" : "no";
  if (q.find("shad") != std::string::npos)
    return static_cast<double>((y >= 60 && y < 200).count()) / n > 0.15 ? "yes" : "no";
  if (q.find("color") != std::string::npos || q.find("colour") != std::string::npos) {
    if (image.channels() == 1) return "no";
    const auto r = image.planes[0].cast<int>(), g = image.planes[1].cast<int>(), b = image.planes[2].cast<int>();
    const auto spread = r.max(g).max(b) - r.min(g).min(b);
    return static_cast<double>((spread > 30).count()) / n > 0.05 ? "yes" : "no";
  }
  return "unknown";
}

std::string CachedBackend::answer(const Raster& image, const std::string& question) {
  std::pair<std::string, std::string> key{image_digest(image), question};
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = memo_.find(key); it != memo_.end()) {
      ++hits_;
      return it->second;
    }
  }
  std::string a = inner_.answer(image, question);
  std::lock_guard<std::mutex> lock(mu_);
  ++misses_;
  return memo_.emplace(std::move(key), std::move(a)).first->second;
}

std::size_t CachedBackend::hits() const {
  std::lock_guard<std::mutex> lock(mu_);
  return hits_;
}

std::size_t CachedBackend::misses() const {
  std::lock_guard<std::mutex> lock(mu_);
  return misses_;
}

std::string normalize_answer(const std::string& text) {
  static const std::array<const char*, 11> kNumbers = {"zero", "one", "two", "three", "four", "five",
                                                       "six",  "seven", "eight", "nine", "ten"};
  std::string lowered;
  for (char c : text) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  std::istringstream words(lowered);
  std::vector<std::string> tokens;
  for (std::string w; words >> w;) tokens.push_back(w);
  while (!tokens.empty()) {
    std::string& last = tokens.back();
    while (!last.empty() && std::ispunct(static_cast<unsigned char>(last.back()))) last.pop_back();
    if (!last.empty()) break;
    tokens.pop_back();
  }
  std::string out;
  for (const auto& t : tokens) {
    std::string mapped = t;
    for (std::size_t i = 0; i < kNumbers.size(); ++i)
      if (t == kNumbers[i]) mapped = std::to_string(i);
    if (!out.empty()) out.push_back(' ');
    out += mapped;
  }
  return out;
}

int answer_match(const std::string& predicted, const std::string& gold) {
  const std::string p = normalize_answer(predicted), g = normalize_answer(gold);
  if (p.empty() || g.empty()) throw EmptyAnswer("answer_match needs two non-empty answers");
  return p == g ? 1 : 0;
}

std::vector<QuestionVerdict> score_questions(VqaBackend& backend, const Raster& image, const std::vector<QAPair>& qas) {
  std::vector<QuestionVerdict> out;
  out.reserve(qas.size());
  for (const auto& qa : qas) {
    QuestionVerdict v{qa.question, qa.answer, backend.answer(image, qa.question), 0, qa.kind};
    v.correct = normalize_answer(v.predicted).empty() ? 0 : answer_match(v.predicted, v.gold);
    out.push_back(std::move(v));
  }
  return out;
}

double tifa_score(VqaBackend& backend, const Raster& image, const std::vector<QAPair>& qas) {
  if (qas.empty()) throw EmptyQASet("tifa_score needs at least one question");
  const auto verdicts = score_questions(backend, image, qas);
  std::size_t correct = 0;
  for (const auto& v : verdicts) correct += static_cast<std::size_t>(v.correct);
  return static_cast<double>(correct) / static_cast<double>(verdicts.size());
}

double blend_reward(double r_instance, double r_sketch, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidRange("alpha must lie in [0,1]");
  return alpha * r_instance + (1.0 - alpha) * r_sketch;
}

namespace {

struct KindMeans {
  std::size_t n_instance = 0, n_sketch = 0;
  double instance = 0.0, sketch = 0.0;
};

KindMeans kind_means(const std::vector<QuestionVerdict>& verdicts) {
  KindMeans k;
  std::size_t c_instance = 0, c_sketch = 0;
  for (const auto& v : verdicts) {
    if (v.kind == QAKind::instance) {
      ++k.n_instance;
      c_instance += static_cast<std::size_t>(v.correct);
    } else {
      ++k.n_sketch;
      c_sketch += static_cast<std::size_t>(v.correct);
    }
  }
  if (k.n_instance) k.instance = static_cast<double>(c_instance) / static_cast<double>(k.n_instance);
  if (k.n_sketch) k.sketch = static_cast<double>(c_sketch) / static_cast<double>(k.n_sketch);
  return k;
}

}  // namespace

RewardReport reward_from_verdicts(std::vector<QuestionVerdict> verdicts, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidRange("alpha must lie in [0,1]");
  const KindMeans k = kind_means(verdicts);
  if (k.n_instance == 0) throw MissingKind("instance");
  if (k.n_sketch == 0) throw MissingKind("sketch");
  RewardReport r;
  r.records = std::move(verdicts);
  r.alpha = alpha;
  r.r_instance = k.instance;
  r.r_sketch = k.sketch;
  r.r_vqa = blend_reward(k.instance, k.sketch, alpha);
  return r;
}

RewardReport vqa_reward(VqaBackend& backend, const Raster& image, const std::vector<QAPair>& qas, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidRange("alpha must lie in [0,1]");
  bool has_instance = false, has_sketch = false;
  for (const auto& qa : qas) (qa.kind == QAKind::instance ? has_instance : has_sketch) = true;
  if (!has_instance) throw MissingKind("instance");
  if (!has_sketch) throw MissingKind("sketch");
  return reward_from_verdicts(score_questions(backend, image, qas), alpha);
}

RewardReport vqa_reward_or_fallback(VqaBackend& backend, const Raster& image, const std::vector<QAPair>& qas,
                                    double alpha) {
  if (qas.empty()) throw EmptyQASet("no questions to score");
  auto verdicts = score_questions(backend, image, qas);
  const KindMeans k = kind_means(verdicts);
  if (k.n_instance && k.n_sketch) return reward_from_verdicts(std::move(verdicts), alpha);
  RewardReport r;
  r.records = std::move(verdicts);
  r.alpha = alpha;
  r.r_instance = k.instance;
  r.r_sketch = k.sketch;
  r.fallback_kind = k.n_instance ? QAKind::instance : QAKind::sketch;
  r.r_vqa = k.n_instance ? k.instance : k.sketch;
  return r;
}

nlohmann::json to_json(const RewardReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& v : r.records)
    records.push_back({{"question", v.question},
                       {"gold", v.gold},
                       {"predicted", v.predicted},
                       {"correct", v.correct},
                       {"kind", to_string(v.kind)}});
  nlohmann::json j = {{"records", records},
                      {"r_instance", r.r_instance},
                      {"r_sketch", r.r_sketch},
                      {"r_vqa", r.r_vqa},
                      {"alpha", r.alpha},
                      {"normalization_version", kNormalizationVersion}};
  if (r.fallback_kind) j["fallback_kind"] = to_string(*r.fallback_kind);
  return j;
}

AccuracyReport eval_backend_accuracy(VqaBackend& backend, const DatasetManifest& testset) {
  AccuracyReport rep;
  rep.backend = backend.info().name;
  for (const auto& r : testset.records) {
    if (r.qa.empty()) continue;
    const Raster image = read_png(testset.image_path(r));
    for (const auto& v : score_questions(backend, image, r.qa)) {
      const std::string pol = to_string(r.polarity), kind = to_string(v.kind);
      for (AccuracyCell* cell : {&rep.overall, &rep.by_polarity[pol], &rep.by_kind[kind],
                                 &rep.by_polarity_kind[pol + "/" + kind]}) {
        cell->correct += static_cast<std::size_t>(v.correct);
        ++cell->total;
      }
    }
  }
  if (rep.overall.total == 0) throw EmptyQASet("test set has no QA pairs");
  return rep;
}

nlohmann::json to_json(const AccuracyReport& r) {
  auto cell = [](const AccuracyCell& c) {
    return nlohmann::json{{"correct", c.correct}, {"total", c.total}, {"accuracy", c.accuracy()}};
  };
  auto group = [&](const std::map<std::string, AccuracyCell>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, c] : m) j[k] = cell(c);
    return j;
  };
  return {{"backend", r.backend},
          {"overall", cell(r.overall)},
          {"by_polarity", group(r.by_polarity)},
          {"by_kind", group(r.by_kind)},
          {"by_polarity_kind", group(r.by_polarity_kind)},
          {"normalization_version", kNormalizationVersion}};
}

std::vector<QAPair> load_qa_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open QA file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw FormatError(path.string() + ": expected a JSON array of QA objects");
  std::vector<QAPair> out;
  for (const auto& e : j) {
    QAPair qa{e.at("q").get<std::string>(), e.at("a").get<std::string>(), parse_qa_kind(e.at("kind").get<std::string>())};
    if (qa.question.empty() || qa.answer.empty()) throw FormatError(path.string() + ": empty question or answer");
    out.push_back(std::move(qa));
  }
  return out;
}

}  // namespace sketchtune
