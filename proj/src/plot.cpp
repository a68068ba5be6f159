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

#include "sketchtune/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "sketchtune/error.hpp"

namespace sketchtune {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr std::array<Rgb, 6> kPalette = {{{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                          {214, 39, 40}, {148, 103, 189}, {140, 86, 75}}};

void put(Raster& img, long x, long y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
  for (int ch = 0; ch < 3; ++ch) img.planes[ch](y, x) = c[ch];
}

void segment(Raster& img, long x0, long y0, long x1, long y1, const Rgb& c) {
  const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  for (;;) {
    put(img, x0, y0, c);
    put(img, x0, y0 + 1, c);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

Raster line_plot(const std::vector<Series>& series, int width, int height, double y_min, double y_max) {
  if (width < 32 || height < 32) throw InvalidArgument("plot canvas too small");
  Raster img(height, width, 3, 255);
  const long left = 24, right = width - 8, top = 8, bottom = height - 24;
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double lo = x_lo, hi = x_hi;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  if (y_min < y_max) {
    lo = y_min;
    hi = y_max;
  }
  if (!std::isfinite(x_lo)) x_lo = 0.0, x_hi = 1.0, lo = 0.0, hi = 1.0;
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (hi <= lo) hi = lo + 1.0;

  const Rgb axis{0, 0, 0}, grid{225, 225, 225};
  for (int k = 1; k < 4; ++k) {
    const long y = bottom - (bottom - top) * k / 4;
    segment(img, left, y, right, y, grid);
  }
  segment(img, left, bottom, right, bottom, axis);
  segment(img, left, top, left, bottom, axis);

  auto px = [&](double x) { return left + std::lround((x - x_lo) / (x_hi - x_lo) * static_cast<double>(right - left)); };
  auto py = [&](double y) {
    const double c = std::clamp((y - lo) / (hi - lo), 0.0, 1.0);
    return bottom - std::lround(c * static_cast<double>(bottom - top));
  };
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Rgb& c = kPalette[i % kPalette.size()];
    const auto& pts = series[i].points;
    for (std::size_t j = 0; j + 1 < pts.size(); ++j)
      segment(img, px(pts[j].first), py(pts[j].second), px(pts[j + 1].first), py(pts[j + 1].second), c);
    if (pts.size() == 1) put(img, px(pts[0].first), py(pts[0].second), c);
    // legend swatch
    for (long dx = 0; dx < 10; ++dx)
      for (long dy = 0; dy < 4; ++dy) put(img, right - 12 - static_cast<long>(i) * 14 + dx, height - 12 + dy, c);
  }
  return img;
}

}  // namespace sketchtune
