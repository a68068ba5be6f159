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

#ifndef SKETCHTUNE_AUGMENT_HPP_
#define SKETCHTUNE_AUGMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sketchtune/dataset.hpp"
#include "sketchtune/image.hpp"

namespace sketchtune {

struct AugmentConfig {
  /// Luma below this is treated as stroke by stroke_noise.
  int stroke_threshold = 128;
  /// Binarization level used by thicken_lines.
  int binarize_threshold = 128;
};

enum class AugmentOp { rotate, blur, stroke_noise, thicken };

/// One entry of the fixed background-preserving augmentation menu.
struct AugmentationSpec {
  AugmentOp op;
  std::string tag;
  double degrees = 0.0;   // rotate
  int kernel = 0;         // blur
  double sigma = 0.0;     // blur stddev or stroke-noise stddev
};

/// The seven augmentations in emission order: rotate -15/+15, blur weak/strong,
/// stroke noise weak/strong, thicken.
std::span<const AugmentationSpec> augmentation_menu();

/// Bilinear rotation about the image center; positive angles turn counter-clockwise on screen.
/// Samples falling outside the source read as white (255).
Raster rotate_white_pad(const Raster& img, double degrees);

/// Normalized 1-D Gaussian taps, length k.
Eigen::VectorXd gaussian_kernel(int k, double sigma);

/// Separable Gaussian blur with reflect-101 borders, no rounding.
PlaneF gaussian_blur(const PlaneF& plane, int k, double sigma);
Raster gaussian_blur(const Raster& img, int k, double sigma);

/// Adds N(0, sigma^2) to every channel of pixels whose luma is below threshold.
Raster stroke_noise(const Raster& img, double sigma, int threshold, std::uint64_t seed);

/// Binarizes at threshold and dilates the dark set once with the 3x3 elliptical (cross) element.
Raster thicken_lines(const Raster& img, int threshold = 128);

Raster apply_augmentation(const AugmentationSpec& spec, const Raster& img, std::uint64_t seed,
                          const AugmentConfig& config = {});

struct AugmentedSample {
  SketchRecord record;
  Raster image;
};

/// Children of an original: 7 for positives, 6 for negatives (no thickening).
/// Child ids are "<parent>_<tag>"; image paths are "<image_prefix><child id>.png".
std::vector<AugmentedSample> augment_record(const SketchRecord& r, const Raster& image, std::uint64_t seed,
                                            const std::string& image_prefix = "",
                                            const AugmentConfig& config = {});

/// Writes every original of the manifest plus its children to out_dir/images and the combined
/// manifest to out_dir/manifest.jsonl. Non-original input records raise AlreadyAugmented.
DatasetManifest augment_dataset(const DatasetManifest& originals, const std::filesystem::path& out_dir,
                                std::uint64_t seed, const AugmentConfig& config = {});

}  // namespace sketchtune

#endif  // SKETCHTUNE_AUGMENT_HPP_
