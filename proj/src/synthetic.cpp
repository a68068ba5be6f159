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

#include "sketchtune/synthetic.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "sketchtune/digest.hpp"
#include "sketchtune/taxonomy.hpp"

namespace sketchtune {

namespace {

struct Rgb {
  double r, g, b;
};

struct NamedColor {
  const char* name;
  Rgb rgb;
};

constexpr std::array<NamedColor, 6> kColors = {{
    {"red", {200, 40, 40}},
    {"blue", {40, 70, 200}},
    {"green", {40, 150, 60}},
    {"orange", {230, 130, 30}},
    {"purple", {130, 50, 160}},
    {"brown", {120, 80, 40}},
}};

constexpr Rgb kBeige{235, 222, 190};

struct Canvas {
  int size;
  std::vector<double> cover;  // stroke coverage in [0,1]
  explicit Canvas(int n) : size(n), cover(static_cast<std::size_t>(n) * n, 0.0) {}

  void mark(int x, int y, double v) {
    if (x < 0 || y < 0 || x >= size || y >= size) return;
    auto& c = cover[static_cast<std::size_t>(y) * size + x];
    c = std::max(c, v);
  }

  void segment(double x0, double y0, double x1, double y1, double width) {
    const double half = 0.5 * width;
    const int xmin = static_cast<int>(std::floor(std::min(x0, x1) - half - 1));
    const int xmax = static_cast<int>(std::ceil(std::max(x0, x1) + half + 1));
    const int ymin = static_cast<int>(std::floor(std::min(y0, y1) - half - 1));
    const int ymax = static_cast<int>(std::ceil(std::max(y0, y1) + half + 1));
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    for (int y = ymin; y <= ymax; ++y)
      for (int x = xmin; x <= xmax; ++x) {
        double t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = x0 + t * dx - x, ey = y0 + t * dy - y;
        const double d = std::sqrt(ex * ex + ey * ey);
        if (d <= half + 0.5) mark(x, y, std::clamp(half + 0.5 - d, 0.0, 1.0));
      }
  }

  void polyline(const std::vector<std::array<double, 2>>& pts, double width, bool closed) {
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) segment(pts[i][0], pts[i][1], pts[i + 1][0], pts[i + 1][1], width);
    if (closed && pts.size() > 2) segment(pts.back()[0], pts.back()[1], pts[0][0], pts[0][1], width);
  }

  void ellipse(double cx, double cy, double rx, double ry, double width) {
    std::vector<std::array<double, 2>> pts;
    constexpr int kSteps = 40;
    for (int i = 0; i < kSteps; ++i) {
      const double a = 2.0 * std::numbers::pi * i / kSteps;
      pts.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    polyline(pts, width, true);
  }
};

// Outline recipe per class index; keeps classes visually distinct at 64 px.
void draw_outline(Canvas& cv, std::size_t class_index, double cx, double cy, double r, double width) {
  switch (class_index % 5) {
    case 0:
      cv.ellipse(cx, cy, r, r, width);
      break;
    case 1:
      cv.ellipse(cx, cy, r, 0.6 * r, width);
      break;
    case 2:
      cv.polyline({{cx - r, cy - 0.8 * r}, {cx + r, cy - 0.8 * r}, {cx + r, cy + 0.8 * r}, {cx - r, cy + 0.8 * r}}, width, true);
      break;
    case 3:
      cv.polyline({{cx, cy - r}, {cx + r, cy + 0.8 * r}, {cx - r, cy + 0.8 * r}}, width, true);
      break;
    default: {
      std::vector<std::array<double, 2>> pts;
      for (int i = 0; i < 10; ++i) {
        const double a = std::numbers::pi * i / 5.0 - std::numbers::pi / 2;
        const double rr = i % 2 == 0 ? r : 0.45 * r;
        pts.push_back({cx + rr * std::cos(a), cy + rr * std::sin(a)});
      }
      cv.polyline(pts, width, true);
    }
  }
  // Second element by class group: ears, stem, handle, tail or wheels.
  switch ((class_index / 5) % 6) {
    case 0:
      cv.segment(cx - 0.5 * r, cy - r, cx - 0.7 * r, cy - 1.4 * r, width);
      cv.segment(cx + 0.5 * r, cy - r, cx + 0.7 * r, cy - 1.4 * r, width);
      break;
    case 1:
      cv.segment(cx, cy - r, cx, cy - 1.5 * r, width);
      break;
    case 2:
      cv.ellipse(cx + 1.25 * r, cy, 0.3 * r, 0.45 * r, width);
      break;
    case 3:
      cv.polyline({{cx + r, cy}, {cx + 1.5 * r, cy - 0.4 * r}, {cx + 1.5 * r, cy + 0.4 * r}}, width, true);
      break;
    case 4:
      cv.ellipse(cx - 0.5 * r, cy + 1.2 * r, 0.3 * r, 0.3 * r, width);
      cv.ellipse(cx + 0.5 * r, cy + 1.2 * r, 0.3 * r, 0.3 * r, width);
      break;
    default:
      cv.segment(cx - r, cy + 1.2 * r, cx + r, cy + 1.2 * r, width);
  }
}

std::size_t class_index_of(std::string_view class_name) {
  std::size_t i = 0;
  const auto folded = fold_name(class_name);
  for (const auto& cat : categories())
    for (auto cls : cat.classes) {
      if (fold_name(cls) == folded) return i;
      ++i;
    }
  return 0;
}

}  // namespace

std::string class_slug(std::string_view class_name) {
  std::string out = fold_name(class_name);
  for (auto& c : out)
    if (c == ' ') c = '_';
  return out;
}

SyntheticSketch draw_synthetic(std::string_view class_name, Polarity polarity, int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = size;
  const double r = s * (0.16 + 0.08 * unit(rng));
  const double cx = s * (0.42 + 0.16 * unit(rng));
  const double cy = s * (0.42 + 0.16 * unit(rng));
  const double width = std::max(1.0, s / 64.0 * (1.5 + unit(rng)));
  const std::size_t cls = class_index_of(class_name);

  SyntheticSketch out;
  Canvas cv(size);
  draw_outline(cv, cls, cx, cy, r, width);
  out.line_count = 1 + static_cast<int>(rng() % 4);
  for (int i = 0; i < out.line_count; ++i) {
    const double off = (i + 1.0) / (out.line_count + 1.0) * 1.2 * r - 0.6 * r;
    cv.segment(cx - 0.45 * r, cy + off, cx + 0.45 * r, cy + off - 0.15 * r, width);
  }

  if (polarity == Polarity::positive) {
    Plane p(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        p(y, x) = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - cv.cover[static_cast<std::size_t>(y) * size + x])));
    out.image = Raster(std::move(p));
    return out;
  }

  const auto& color = kColors[rng() % kColors.size()];
  out.color = color.name;
  Raster img(size, size, 3);
  const double shade_dir = unit(rng) * 2.0 * std::numbers::pi;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = (x - cx) / r, dy = (y - cy) / r;
      const double inside = std::clamp(1.2 - std::sqrt(dx * dx + dy * dy), 0.0, 1.0);
      const double shade = 0.55 + 0.45 * std::clamp(0.5 + 0.5 * (dx * std::cos(shade_dir) + dy * std::sin(shade_dir)), 0.0, 1.0);
      const double ink = cv.cover[static_cast<std::size_t>(y) * size + x];
      const double texture = 6.0 * std::sin(0.9 * x + 0.4 * y);
      const Rgb fill{color.rgb.r * shade, color.rgb.g * shade, color.rgb.b * shade};
      auto blend = [&](double bg, double fg) {
        const double v = (1 - inside) * (bg + texture) + inside * fg;
        return static_cast<std::uint8_t>(std::lround(std::clamp(v * (1 - 0.8 * ink), 0.0, 255.0)));
      };
      img.planes[0](y, x) = blend(kBeige.r, fill.r);
      img.planes[1](y, x) = blend(kBeige.g, fill.g);
      img.planes[2](y, x) = blend(kBeige.b, fill.b);
    }
  out.image = std::move(img);
  return out;
}

std::vector<std::pair<SketchRecord, Raster>> make_synthetic_originals(const SyntheticOptions& options) {
  std::vector<std::string_view> classes;
  std::vector<std::string_view> owners;
  for (const auto& cat : categories())
    for (auto cls : cat.classes) {
      classes.push_back(cls);
      owners.push_back(cat.name);
    }

  std::vector<std::pair<SketchRecord, Raster>> out;
  auto emit = [&](Polarity pol, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t ci = i % classes.size();
      const std::size_t ordinal = i / classes.size() + 1;
      const std::string slug = class_slug(classes[ci]);
      SketchRecord r;
      r.id = pol == Polarity::positive ? slug + "_" + std::to_string(ordinal) : slug + "_neg_" + std::to_string(ordinal);
      r.image = (options.image_subdir.empty() ? std::string() : options.image_subdir + "/") + r.id + ".png";
      r.class_name = std::string(classes[ci]);
      r.category = std::string(owners[ci]);
      r.polarity = pol;
      std::mt19937_64 rng(derive_seed(options.seed, r.id));
      SyntheticSketch sk = draw_synthetic(classes[ci], pol, options.size, rng);
      const std::string noun = fold_name(classes[ci]);
      const std::string lines = std::to_string(sk.line_count);
      if (pol == Polarity::positive) {
        r.caption = "A simple drawing of a " + noun + " with " + lines + " lines on a white background.";
        r.qa = {{"What is in the picture?", noun, QAKind::instance},
                {"How many lines are on the " + noun + "?", lines, QAKind::instance},
                {"Is the background white?", "yes", QAKind::sketch},
                {"Is the drawing colored?", "no", QAKind::sketch}};
      } else {
        r.caption = "A detailed drawing of a " + sk.color + " " + noun + " on a beige background featuring a lot of shading.";
        r.qa = {{"What color is the " + noun + "?", sk.color, QAKind::instance},
                {"What is in the picture?", noun, QAKind::instance},
                {"Is the background white?", "no", QAKind::sketch},
                {"Is there shading in the drawing?", "yes", QAKind::sketch}};
      }
      out.emplace_back(std::move(r), std::move(sk.image));
    }
  };
  emit(Polarity::positive, options.positive_originals);
  emit(Polarity::negative, options.negative_originals);
  return out;
}

DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& options) {
  std::filesystem::create_directories(dir / options.image_subdir);
  DatasetManifest m;
  m.base_dir = dir;
  for (auto& [record, image] : make_synthetic_originals(options)) {
    write_png(dir / record.image, image);
    m.records.push_back(std::move(record));
  }
  m.recount();
  write_manifest(dir / "manifest.jsonl", m);
  return m;
}

}  // namespace sketchtune
