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

#include "sketchtune/augment.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "sketchtune/digest.hpp"
#include "sketchtune/error.hpp"

namespace sketchtune {

namespace {

const std::array<AugmentationSpec, 7> kMenu = {{
    {AugmentOp::rotate, "rotate_m15", -15.0, 0, 0.0},
    {AugmentOp::rotate, "rotate_p15", 15.0, 0, 0.0},
    {AugmentOp::blur, "blur_weak", 0.0, 3, 0.8},
    {AugmentOp::blur, "blur_strong", 0.0, 5, 1.6},
    {AugmentOp::stroke_noise, "noise_weak", 0.0, 0, 8.0},
    {AugmentOp::stroke_noise, "noise_strong", 0.0, 0, 16.0},
    {AugmentOp::thicken, "thicken", 0.0, 0, 0.0},
}};

std::uint8_t round_clamp(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

}  // namespace

std::span<const AugmentationSpec> augmentation_menu() { return kMenu; }

Raster rotate_white_pad(const Raster& img, double degrees) {
  if (img.empty()) throw InvalidArgument("rotate: empty raster");
  const int h = static_cast<int>(img.height()), w = static_cast<int>(img.width());
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  Raster out(h, w, img.channels());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = cx + c * dx - s * dy;
      const double sy = cy + s * dx + c * dy;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < img.channels(); ++ch) {
        const Plane& p = img.planes[ch];
        auto at = [&](int yy, int xx) -> double {
          return (xx < 0 || yy < 0 || xx >= w || yy >= h) ? 255.0 : static_cast<double>(p(yy, xx));
        };
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                         fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        out.planes[ch](y, x) = round_clamp(v);
      }
    }
  }
  return out;
}

Eigen::VectorXd gaussian_kernel(int k, double sigma) {
  if (k < 3 || k % 2 == 0) throw InvalidKernel("kernel size must be odd and >= 3, got " + std::to_string(k));
  if (!(sigma > 0.0)) throw InvalidKernel("sigma must be positive");
  const int r = k / 2;
  Eigen::VectorXd taps(k);
  for (int i = -r; i <= r; ++i) taps(i + r) = std::exp(-(i * i) / (2.0 * sigma * sigma));
  return taps / taps.sum();
}

PlaneF gaussian_blur(const PlaneF& plane, int k, double sigma) {
  const Eigen::VectorXd taps = gaussian_kernel(k, sigma);
  const int r = k / 2;
  const int h = static_cast<int>(plane.rows()), w = static_cast<int>(plane.cols());
  PlaneF tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += taps(i + r) * plane(y, reflect101(x + i, w));
      tmp(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += taps(i + r) * tmp(reflect101(y + i, h), x);
      out(y, x) = acc;
    }
  return out;
}

Raster gaussian_blur(const Raster& img, int k, double sigma) {
  Raster out;
  for (const auto& p : img.planes) {
    const PlaneF blurred = gaussian_blur(PlaneF(p.cast<double>()), k, sigma);
    out.planes.push_back(blurred.round().min(255.0).max(0.0).cast<std::uint8_t>());
  }
  return out;
}

Raster stroke_noise(const Raster& img, double sigma, int threshold, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw InvalidArgument("stroke_noise: sigma must be positive");
  const Plane luma = img.luma();
  Raster out = img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (Eigen::Index y = 0; y < img.height(); ++y)
    for (Eigen::Index x = 0; x < img.width(); ++x) {
      if (luma(y, x) >= threshold) continue;
      for (auto& p : out.planes) p(y, x) = round_clamp(static_cast<double>(p(y, x)) + noise(rng));
    }
  return out;
}

Raster thicken_lines(const Raster& img, int threshold) {
  const Plane luma = img.luma();
  const Eigen::Index h = luma.rows(), w = luma.cols();
  const auto stroke = (luma.cast<int>() < threshold).eval();
  Plane out = Plane::Constant(h, w, 255);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const bool hit = stroke(y, x) || (y > 0 && stroke(y - 1, x)) || (y + 1 < h && stroke(y + 1, x)) ||
                       (x > 0 && stroke(y, x - 1)) || (x + 1 < w && stroke(y, x + 1));
      if (hit) out(y, x) = 0;
    }
  Raster r;
  for (int c = 0; c < img.channels(); ++c) r.planes.push_back(out);
  return r;
}

Raster apply_augmentation(const AugmentationSpec& spec, const Raster& img, std::uint64_t seed,
                          const AugmentConfig& config) {
  switch (spec.op) {
    case AugmentOp::rotate:
      return rotate_white_pad(img, spec.degrees);
    case AugmentOp::blur:
      return gaussian_blur(img, spec.kernel, spec.sigma);
    case AugmentOp::stroke_noise:
      return stroke_noise(img, spec.sigma, config.stroke_threshold, seed);
    case AugmentOp::thicken:
      return thicken_lines(img, config.binarize_threshold);
  }
  throw InvalidArgument("unknown augmentation");
}

std::vector<AugmentedSample> augment_record(const SketchRecord& r, const Raster& image, std::uint64_t seed,
                                            const std::string& image_prefix, const AugmentConfig& config) {
  if (!r.provenance.is_original()) throw AlreadyAugmented("record '" + r.id + "' is already augmented");
  std::vector<AugmentedSample> out;
  for (const auto& spec : augmentation_menu()) {
    if (spec.op == AugmentOp::thicken && r.polarity == Polarity::negative) continue;
    AugmentedSample s;
    s.record = r;
    s.record.id = r.id + "_" + spec.tag;
    s.record.image = image_prefix + s.record.id + ".png";
    s.record.provenance = Provenance::augmented(spec.tag, r.id);
    s.image = apply_augmentation(spec, image, derive_seed(seed, s.record.id), config);
    out.push_back(std::move(s));
  }
  return out;
}

DatasetManifest augment_dataset(const DatasetManifest& originals, const std::filesystem::path& out_dir,
                                std::uint64_t seed, const AugmentConfig& config) {
  std::filesystem::create_directories(out_dir / "images");
  DatasetManifest out;
  out.base_dir = out_dir;
  for (const auto& r : originals.records) {
    if (!r.provenance.is_original()) throw AlreadyAugmented("record '" + r.id + "' is already augmented");
    const Raster image = read_png(originals.image_path(r));
    SketchRecord copy = r;
    copy.image = "images/" + r.id + ".png";
    write_png(out_dir / copy.image, image);
    out.records.push_back(std::move(copy));
    for (auto& child : augment_record(r, image, seed, "images/", config)) {
      write_png(out_dir / child.record.image, child.image);
      out.records.push_back(std::move(child.record));
    }
  }
  out.recount();
  write_manifest(out_dir / "manifest.jsonl", out);
  return out;
}

}  // namespace sketchtune
