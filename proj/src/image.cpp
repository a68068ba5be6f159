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

#include "sketchtune/image.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sketchtune/error.hpp"

namespace sketchtune {

Raster::Raster(Eigen::Index height, Eigen::Index width, int channels, std::uint8_t fill) {
  if (channels != 1 && channels != 3) throw InvalidArgument("raster must have 1 or 3 channels");
  for (int c = 0; c < channels; ++c) planes.push_back(Plane::Constant(height, width, fill));
}

Plane Raster::luma() const {
  if (channels() == 1) return planes.front();
  const PlaneF y = 0.299 * planes[0].cast<double>() + 0.587 * planes[1].cast<double>() +
                   0.114 * planes[2].cast<double>();
  return y.round().min(255.0).max(0.0).cast<std::uint8_t>();
}

bool operator==(const Raster& a, const Raster& b) {
  if (a.channels() != b.channels()) return false;
  for (int c = 0; c < a.channels(); ++c) {
    if (a.planes[c].rows() != b.planes[c].rows() || a.planes[c].cols() != b.planes[c].cols())
      return false;
    if ((a.planes[c] != b.planes[c]).any()) return false;
  }
  return true;
}

PlaneF to_unit(const Plane& p) { return p.cast<double>() / 255.0; }

Plane from_unit(const PlaneF& p) {
  return (p * 255.0).round().min(255.0).max(0.0).cast<std::uint8_t>();
}

Eigen::VectorXd unit_column(const Raster& img) {
  const PlaneF unit = to_unit(img.luma());
  return Eigen::Map<const Eigen::VectorXd>(unit.data(), unit.size());
}

Raster gray_from_column(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Index height, Eigen::Index width) {
  if (v.size() != height * width) throw ShapeMismatch("column does not match image size");
  PlaneF p(height, width);
  Eigen::Map<Eigen::VectorXd>(p.data(), p.size()) = v.cwiseMax(0.0).cwiseMin(1.0);
  return Raster(from_unit(p));
}

namespace {

Raster from_interleaved(const std::vector<std::uint8_t>& buf, int h, int w, int channels) {
  Raster out(h, w, channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        out.planes[c](y, x) = buf[(static_cast<std::size_t>(y) * w + x) * channels + c];
  return out;
}

std::vector<std::uint8_t> to_interleaved(const Raster& img) {
  const int h = static_cast<int>(img.height()), w = static_cast<int>(img.width());
  const int channels = img.channels();
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(h) * w * channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        buf[(static_cast<std::size_t>(y) * w + x) * channels + c] = img.planes[c](y, x);
  return buf;
}

// Reads with the simplified libpng API; colour types collapse to gray or RGB.
Raster finish_read(png_image& image) {
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("png decode failed: " + msg);
  }
  return from_interleaved(buf, static_cast<int>(image.height), static_cast<int>(image.width),
                          color ? 3 : 1);
}

}  // namespace

Raster read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read png " + path.string() + ": " + image.message);
  return finish_read(image);
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw FormatError(std::string("cannot decode png: ") + image.message);
  return finish_read(image);
}

std::vector<std::uint8_t> encode_png(const Raster& img) {
  if (img.empty()) throw InvalidArgument("cannot encode empty raster");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto pixels = to_interleaved(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw FormatError(std::string("png sizing failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
    throw FormatError(std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Raster& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

Raster hconcat(std::span<const Raster> tiles) {
  if (tiles.empty()) return {};
  const auto h = tiles.front().height();
  Eigen::Index w = 0;
  for (const auto& t : tiles) {
    if (t.height() != h || t.channels() != 1) throw ShapeMismatch("hconcat needs equal-height gray tiles");
    w += t.width();
  }
  Plane out(h, w);
  Eigen::Index x = 0;
  for (const auto& t : tiles) {
    out.block(0, x, h, t.width()) = t.planes.front();
    x += t.width();
  }
  return Raster(std::move(out));
}

}  // namespace sketchtune
