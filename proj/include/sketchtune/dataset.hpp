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

#ifndef SKETCHTUNE_DATASET_HPP_
#define SKETCHTUNE_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sketchtune {

enum class Polarity { positive, negative };
enum class QAKind { instance, sketch };

std::string to_string(Polarity p);
std::string to_string(QAKind k);
Polarity parse_polarity(const std::string& s);
QAKind parse_qa_kind(const std::string& s);

struct QAPair {
  std::string question;
  std::string answer;
  QAKind kind = QAKind::instance;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

/// Original drawings have an empty tag; augmented records name the op and their parent.
struct Provenance {
  std::string tag;
  std::string parent;

  bool is_original() const { return tag.empty(); }
  static Provenance original() { return {}; }
  static Provenance augmented(std::string tag, std::string parent) { return {std::move(tag), std::move(parent)}; }

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct SketchRecord {
  std::string id;
  std::string image;  // as stored; relative paths resolve against the manifest directory
  std::string class_name;
  std::string category;
  Polarity polarity = Polarity::positive;
  std::string caption;
  std::vector<QAPair> qa;
  Provenance provenance;

  std::size_t instance_count() const;
  std::size_t sketch_count() const;

  friend bool operator==(const SketchRecord&, const SketchRecord&) = default;
};

struct ManifestCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t qa_positive = 0;
  std::size_t qa_negative = 0;

  std::size_t total() const { return positive + negative; }
  std::size_t qa_total() const { return qa_positive + qa_negative; }

  friend bool operator==(const ManifestCounts&, const ManifestCounts&) = default;
};

ManifestCounts compute_counts(const std::vector<SketchRecord>& records);

inline constexpr int kSchemaVersion = 1;

struct DatasetManifest {
  int schema_version = kSchemaVersion;
  std::vector<SketchRecord> records;
  ManifestCounts counts;
  /// Counts as written in the header line, when one was present.
  std::optional<ManifestCounts> stored_counts;
  /// Directory that relative image paths resolve against.
  std::filesystem::path base_dir;

  std::filesystem::path image_path(const SketchRecord& r) const;
  const SketchRecord* find(const std::string& id) const;
  void recount() { counts = compute_counts(records); }
};

struct LoadOptions {
  bool check_images = true;
};

/// Parses the line-delimited manifest. Throws MalformedRecord on the first schema violation and
/// MissingImage (listing every unresolved id) after a full pass.
DatasetManifest load_manifest(const std::filesystem::path& path, const LoadOptions& options = {});
DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                               const LoadOptions& options = {});

/// Canonical serialization: header line then one record per line, fixed field order.
std::string serialize_manifest(const DatasetManifest& m);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);

struct Finding {
  std::string record_id;
  std::string code;
  std::string message;

  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
  std::vector<Finding> findings;
  std::size_t positive_originals = 0;
  std::size_t negative_originals = 0;
  bool augmentation_complete = false;

  bool ok() const { return findings.empty(); }
  bool has(const std::string& code) const;
};

struct ValidateOptions {
  /// Open every image to check the PNG signature and squareness.
  bool check_image_files = false;
};

/// Family sizes (original + children) when augmentation is complete.
inline constexpr std::size_t kPositiveFamilySize = 8;
inline constexpr std::size_t kNegativeFamilySize = 7;

ValidationReport validate_dataset(const DatasetManifest& m, const ValidateOptions& options = {});

/// Stratified by class over originals; augmented records follow their parent.
std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& m, double train_fraction,
                                                          std::uint64_t seed);

}  // namespace sketchtune

#endif  // SKETCHTUNE_DATASET_HPP_
