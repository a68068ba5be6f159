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

#ifndef SKETCHTUNE_SYNTHETIC_HPP_
#define SKETCHTUNE_SYNTHETIC_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

#include "sketchtune/dataset.hpp"
#include "sketchtune/image.hpp"

namespace sketchtune {

/// Procedural stand-ins for SketchDUO drawings. Positives are black strokes on white; negatives are
/// coloured, shaded shapes on a beige field.
struct SyntheticSketch {
  Raster image;
  std::string color;  // negatives only
  int line_count = 0;
};

SyntheticSketch draw_synthetic(std::string_view class_name, Polarity polarity, int size, std::mt19937_64& rng);

/// File-name slug: "Alarm Clock" -> "alarm_clock".
std::string class_slug(std::string_view class_name);

struct SyntheticOptions {
  std::size_t positive_originals = 200;
  std::size_t negative_originals = 0;
  int size = 64;
  std::uint64_t seed = 0;
  /// Written relative to the manifest directory.
  std::string image_subdir = "images";
};

/// Builds originals round-robin over the 30 classes, writes PNGs under dir/image_subdir and the manifest
/// to dir/manifest.jsonl. Returns the manifest.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& options);

/// Same records and rasters without touching the filesystem; image paths are still populated.
std::vector<std::pair<SketchRecord, Raster>> make_synthetic_originals(const SyntheticOptions& options);

}  // namespace sketchtune

#endif  // SKETCHTUNE_SYNTHETIC_HPP_
