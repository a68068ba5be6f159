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

#include "sketchtune/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "sketchtune/error.hpp"
#include "sketchtune/image.hpp"
#include "sketchtune/taxonomy.hpp"

namespace sketchtune {

using OrderedJson = nlohmann::ordered_json;

std::string to_string(Polarity p) { return p == Polarity::positive ? "positive" : "negative"; }
std::string to_string(QAKind k) { return k == QAKind::instance ? "instance" : "sketch"; }

Polarity parse_polarity(const std::string& s) {
  if (s == "positive") return Polarity::positive;
  if (s == "negative") return Polarity::negative;
  throw InvalidArgument("unknown polarity '" + s + "'");
}

QAKind parse_qa_kind(const std::string& s) {
  if (s == "instance") return QAKind::instance;
  if (s == "sketch") return QAKind::sketch;
  throw InvalidArgument("unknown QA kind '" + s + "'");
}

std::size_t SketchRecord::instance_count() const {
  return static_cast<std::size_t>(std::count_if(qa.begin(), qa.end(), [](const QAPair& p) { return p.kind == QAKind::instance; }));
}

std::size_t SketchRecord::sketch_count() const {
  return static_cast<std::size_t>(std::count_if(qa.begin(), qa.end(), [](const QAPair& p) { return p.kind == QAKind::sketch; }));
}

ManifestCounts compute_counts(const std::vector<SketchRecord>& records) {
  ManifestCounts c;
  for (const auto& r : records) {
    if (r.polarity == Polarity::positive) {
      ++c.positive;
      c.qa_positive += r.qa.size();
    } else {
      ++c.negative;
      c.qa_negative += r.qa.size();
    }
  }
  return c;
}

std::filesystem::path DatasetManifest::image_path(const SketchRecord& r) const {
  std::filesystem::path p(r.image);
  return p.is_absolute() ? p : base_dir / p;
}

const SketchRecord* DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

bool ValidationReport::has(const std::string& code) const {
  return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.code == code; });
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string require_string(const nlohmann::json& j, const char* key, std::size_t line_no) {
  if (!j.contains(key) || !j.at(key).is_string()) throw MalformedRecord(line_no, std::string("missing string field '") + key + "'");
  return j.at(key).get<std::string>();
}

ManifestCounts parse_counts(const nlohmann::json& j, std::size_t line_no) {
  try {
    ManifestCounts c;
    c.positive = j.at("positive").get<std::size_t>();
    c.negative = j.at("negative").get<std::size_t>();
    c.qa_positive = j.value("qa_positive", std::size_t{0});
    c.qa_negative = j.value("qa_negative", std::size_t{0});
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(line_no, std::string("bad counts: ") + e.what());
  }
}

SketchRecord parse_record(const nlohmann::json& j, std::size_t line_no) {
  if (!j.is_object()) throw MalformedRecord(line_no, "record is not an object");
  SketchRecord r;
  r.id = require_string(j, "id", line_no);
  if (trim(r.id).empty()) throw MalformedRecord(line_no, "empty id");
  r.image = require_string(j, "image", line_no);
  r.class_name = require_string(j, "class", line_no);
  r.category = require_string(j, "category", line_no);
  const auto owner = category_of(r.class_name);
  if (!owner) throw MalformedRecord(line_no, "unknown class '" + r.class_name + "'");
  const auto cat = canonical_category(r.category);
  if (!cat) throw MalformedRecord(line_no, "unknown category '" + r.category + "'");
  if (*owner != *cat)
    throw MalformedRecord(line_no, "class '" + r.class_name + "' belongs to '" + std::string(*owner) + "', not '" + r.category + "'");
  try {
    r.polarity = parse_polarity(require_string(j, "polarity", line_no));
  } catch (const InvalidArgument& e) {
    throw MalformedRecord(line_no, e.what());
  }
  r.caption = require_string(j, "caption", line_no);
  if (!j.contains("qa") || !j.at("qa").is_array()) throw MalformedRecord(line_no, "missing array field 'qa'");
  for (const auto& q : j.at("qa")) {
    if (!q.is_object()) throw MalformedRecord(line_no, "qa entry is not an object");
    QAPair p;
    p.question = require_string(q, "q", line_no);
    p.answer = require_string(q, "a", line_no);
    if (trim(p.question).empty() || trim(p.answer).empty()) throw MalformedRecord(line_no, "empty question or answer");
    try {
      p.kind = parse_qa_kind(require_string(q, "kind", line_no));
    } catch (const InvalidArgument& e) {
      throw MalformedRecord(line_no, e.what());
    }
    r.qa.push_back(std::move(p));
  }
  if (!j.contains("provenance")) throw MalformedRecord(line_no, "missing field 'provenance'");
  const auto& prov = j.at("provenance");
  if (prov.is_string()) {
    if (prov.get<std::string>() != "original") throw MalformedRecord(line_no, "provenance string must be 'original'");
  } else if (prov.is_object()) {
    r.provenance.tag = require_string(prov, "augmented", line_no);
    r.provenance.parent = require_string(prov, "parent", line_no);
    if (r.provenance.tag.empty() || r.provenance.parent.empty())
      throw MalformedRecord(line_no, "augmented provenance needs a tag and a parent");
  } else {
    throw MalformedRecord(line_no, "bad provenance");
  }
  return r;
}

OrderedJson record_json(const SketchRecord& r) {
  OrderedJson j;
  j["id"] = r.id;
  j["image"] = r.image;
  j["class"] = r.class_name;
  j["category"] = r.category;
  j["polarity"] = to_string(r.polarity);
  j["caption"] = r.caption;
  j["qa"] = OrderedJson::array();
  for (const auto& p : r.qa) {
    OrderedJson q;
    q["q"] = p.question;
    q["a"] = p.answer;
    q["kind"] = to_string(p.kind);
    j["qa"].push_back(std::move(q));
  }
  if (r.provenance.is_original()) {
    j["provenance"] = "original";
  } else {
    OrderedJson p;
    p["augmented"] = r.provenance.tag;
    p["parent"] = r.provenance.parent;
    j["provenance"] = std::move(p);
  }
  return j;
}

}  // namespace

DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir, const LoadOptions& options) {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  std::vector<std::string> missing;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecord(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!seen_content && j.is_object() && j.contains("schema_version")) {
      seen_content = true;
      m.schema_version = j.at("schema_version").get<int>();
      if (m.schema_version != kSchemaVersion)
        throw MalformedRecord(line_no, "unsupported schema_version " + std::to_string(m.schema_version));
      if (j.contains("counts")) m.stored_counts = parse_counts(j.at("counts"), line_no);
      continue;
    }
    seen_content = true;
    SketchRecord r = parse_record(j, line_no);
    if (options.check_images && !std::filesystem::exists(m.image_path(r))) missing.push_back(r.id);
    m.records.push_back(std::move(r));
  }
  m.recount();
  if (!missing.empty()) throw MissingImage(std::move(missing));
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return parse_manifest(in, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."), options);
}

std::string serialize_manifest(const DatasetManifest& m) {
  const ManifestCounts c = compute_counts(m.records);
  OrderedJson header;
  header["schema_version"] = m.schema_version;
  header["counts"] = {{"positive", c.positive},       {"negative", c.negative},       {"qa_positive", c.qa_positive},
                      {"qa_negative", c.qa_negative}, {"qa_total", c.qa_total()}};
  std::string out = header.dump() + "\n";
  for (const auto& r : m.records) out += record_json(r).dump() + "\n";
  return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << serialize_manifest(m);
}

ValidationReport validate_dataset(const DatasetManifest& m, const ValidateOptions& options) {
  ValidationReport report;
  auto add = [&](const std::string& id, std::string code, std::string msg) {
    report.findings.push_back({id, std::move(code), std::move(msg)});
  };

  std::unordered_map<std::string, const SketchRecord*> by_id;
  by_id.reserve(m.records.size());
  for (const auto& r : m.records)
    if (!by_id.emplace(r.id, &r).second) add(r.id, "duplicate_id", "id appears more than once");

  std::map<std::string, std::set<std::string>> children;  // parent -> tags
  bool any_augmented = false;
  for (const auto& r : m.records) {
    const auto owner = category_of(r.class_name);
    const auto cat = canonical_category(r.category);
    if (!owner) {
      add(r.id, "unknown_class", "class '" + r.class_name + "' is not in the taxonomy");
    } else if (!cat || *owner != *cat) {
      add(r.id, "category_mismatch", "class '" + r.class_name + "' does not belong to '" + r.category + "'");
    }
    if (r.qa.empty()) add(r.id, "empty_qa", "empty QA set");
    for (const auto& p : r.qa)
      if (trim(p.question).empty() || trim(p.answer).empty()) add(r.id, "empty_qa_text", "empty question or answer");
    if (r.instance_count() + r.sketch_count() != r.qa.size()) add(r.id, "qa_partition", "QA kinds do not partition the list");

    const auto ext = fold_name(std::filesystem::path(r.image).extension().string());
    if (ext != ".png") add(r.id, "non_png", "image '" + r.image + "' is not PNG");
    if (options.check_image_files) {
      const auto path = m.image_path(r);
      if (!std::filesystem::exists(path)) {
        add(r.id, "missing_image", "image not found");
      } else if (!has_png_signature(path)) {
        add(r.id, "non_png", "image content is not PNG");
      } else {
        try {
          if (!read_png(path).is_square()) add(r.id, "not_square", "image is not square");
        } catch (const Error& e) {
          add(r.id, "undecodable_image", e.what());
        }
      }
    }

    if (r.provenance.is_original()) {
      (r.polarity == Polarity::positive ? report.positive_originals : report.negative_originals)++;
      continue;
    }
    any_augmented = true;
    auto it = by_id.find(r.provenance.parent);
    if (it == by_id.end()) {
      add(r.id, "orphan_augmentation", "parent '" + r.provenance.parent + "' not in manifest");
      continue;
    }
    const SketchRecord& parent = *it->second;
    if (!parent.provenance.is_original()) add(r.id, "nested_augmentation", "parent is itself augmented");
    if (parent.polarity != r.polarity) add(r.id, "polarity_mismatch", "polarity differs from parent");
    if (parent.class_name != r.class_name) add(r.id, "class_mismatch", "class differs from parent");
    if (!children[r.provenance.parent].insert(r.provenance.tag).second)
      add(r.id, "duplicate_tag", "tag '" + r.provenance.tag + "' repeated within family");
  }

  if (m.stored_counts && !(*m.stored_counts == compute_counts(m.records)))
    add("", "counts_mismatch", "header counts differ from recomputed counts");

  if (any_augmented) {
    bool complete = true;
    for (const auto& r : m.records) {
      if (!r.provenance.is_original()) continue;
      const std::size_t expected = (r.polarity == Polarity::positive ? kPositiveFamilySize : kNegativeFamilySize) - 1;
      const auto it = children.find(r.id);
      const std::size_t have = it == children.end() ? 0 : it->second.size();
      if (have != expected) {
        complete = false;
        add(r.id, "incomplete_family",
            "has " + std::to_string(have) + " augmentations, expected " + std::to_string(expected));
      }
    }
    report.augmentation_complete = complete;
    if (complete) {
      const auto c = compute_counts(m.records);
      if (c.positive != report.positive_originals * kPositiveFamilySize)
        add("", "positive_count_identity",
            std::to_string(c.positive) + " positives != " + std::to_string(report.positive_originals) + " x 8");
      if (c.negative != report.negative_originals * kNegativeFamilySize)
        add("", "negative_count_identity",
            std::to_string(c.negative) + " negatives != " + std::to_string(report.negative_originals) + " x 7");
    }
  }

  std::stable_sort(report.findings.begin(), report.findings.end(),
                   [](const Finding& a, const Finding& b) { return a.record_id < b.record_id; });
  return report;
}

std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& m, double train_fraction,
                                                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must be in (0, 1)");
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto& r : m.records)
    if (r.provenance.is_original()) by_class[fold_name(r.class_name)].push_back(r.id);

  std::mt19937_64 rng(seed);
  std::set<std::string> train_ids;
  for (auto& [cls, ids] : by_class) {
    if (ids.size() < 2) throw InsufficientData("class '" + cls + "' has fewer than 2 originals");
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = static_cast<long>(ids.size());
    const long n_train = std::clamp(std::lround(train_fraction * static_cast<double>(n)), 1L, n - 1);
    train_ids.insert(ids.begin(), ids.begin() + n_train);
  }

  DatasetManifest train, test;
  train.schema_version = test.schema_version = m.schema_version;
  train.base_dir = test.base_dir = m.base_dir;
  for (const auto& r : m.records) {
    const std::string& root = r.provenance.is_original() ? r.id : r.provenance.parent;
    (train_ids.contains(root) ? train : test).records.push_back(r);
  }
  train.recount();
  test.recount();
  return {std::move(train), std::move(test)};
}

}  // namespace sketchtune
