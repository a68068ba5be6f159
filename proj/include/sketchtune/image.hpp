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

#ifndef SKETCHTUNE_IMAGE_HPP_
#define SKETCHTUNE_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace sketchtune {

/// One 8-bit channel, indexed (row, col).
using Plane = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PlaneF = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 8-bit raster with one (gray) or three (RGB) planes of identical size.
struct Raster {
  std::vector<Plane> planes;

  Raster() = default;
  explicit Raster(Plane gray) { planes.push_back(std::move(gray)); }
  Raster(Eigen::Index height, Eigen::Index width, int channels, std::uint8_t fill = 255);

  Eigen::Index height() const { return planes.empty() ? 0 : planes.front().rows(); }
  Eigen::Index width() const { return planes.empty() ? 0 : planes.front().cols(); }
  int channels() const { return static_cast<int>(planes.size()); }
  bool empty() const { return planes.empty() || planes.front().size() == 0; }
  bool is_square() const { return !empty() && height() == width(); }

  /// BT.601 luma; returns the single plane unchanged for grayscale input.
  Plane luma() const;

  friend bool operator==(const Raster& a, const Raster& b);
};

/// Grayscale raster to [0,1] doubles.
PlaneF to_unit(const Plane& p);
/// [0,1] doubles to 8-bit with round-and-clamp.
Plane from_unit(const PlaneF& p);

/// Luma in [0,1] flattened row-major into one column.
Eigen::VectorXd unit_column(const Raster& img);
/// Inverse of unit_column for a height x width grayscale image (values clamped to [0,1]).
Raster gray_from_column(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Index height, Eigen::Index width);

Raster read_png(const std::filesystem::path& path);
Raster decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Raster& img);
std::vector<std::uint8_t> encode_png(const Raster& img);
bool has_png_signature(const std::filesystem::path& path);

/// Horizontal concatenation of equally tall grayscale rasters (reconstruction grids).
Raster hconcat(std::span<const Raster> tiles);

}  // namespace sketchtune

#endif  // SKETCHTUNE_IMAGE_HPP_
