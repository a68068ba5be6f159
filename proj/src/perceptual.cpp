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

#include "sketchtune/perceptual.hpp"

#include <cmath>
#include <random>

#include "sketchtune/error.hpp"

namespace sketchtune {

namespace {

ad::ConvGeometry layer_geometry(int batch, int h, int w, int in_channels) {
  ad::ConvGeometry g;
  g.batch = batch;
  g.height = h;
  g.width = w;
  g.channels = in_channels;
  g.kernel = 3;
  g.stride = 2;
  g.padding = 1;
  return g;
}

}  // namespace

PerceptualExtractor PerceptualExtractor::toy(int height, int width, std::uint64_t seed, std::vector<int> channels,
                                             std::vector<double> layer_weights) {
  if (height <= 0 || width <= 0 || channels.empty()) throw InvalidArgument("extractor needs a positive size and layers");
  PerceptualExtractor e;
  e.height_ = height;
  e.width_ = width;
  e.seed_ = seed;
  e.channels_ = channels;
  e.layer_weights_ = layer_weights.empty() ? std::vector<double>(channels.size(), 1.0) : std::move(layer_weights);
  if (e.layer_weights_.size() != channels.size()) throw InvalidArgument("one weight per layer required");
  for (double w : e.layer_weights_)
    if (!(w >= 0.0)) throw InvalidArgument("layer weights must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  int in = 1;
  for (int out : channels) {
    const int fan_in = in * 9;
    const double stddev = std::sqrt(2.0 / fan_in);
    ad::Matrix w(out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = stddev * normal(rng);
    ad::Matrix b(out, 1);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 0.1 * normal(rng);
    e.conv_weights_.push_back(std::move(w));
    e.conv_biases_.push_back(std::move(b));
    in = out;
  }
  return e;
}

std::vector<ad::Var> PerceptualExtractor::features(ad::Tape& tape, ad::Var x) const {
  if (!available()) throw ExtractorUnavailable("perceptual extractor not initialized");
  if (x.rows() != static_cast<Eigen::Index>(height_) * width_)
    throw ShapeMismatch("extractor expects " + std::to_string(height_ * width_) + " pixels per image");
  const int batch = static_cast<int>(x.cols());
  // (pixels, batch) -> (1, batch*pixels) with sample-major columns, scaled to [-1, 1].
  ad::Var h = add_scalar(scale(reshape(x, 1, x.value().size()), 2.0), -1.0);
  int hh = height_, ww = width_, in = 1;
  std::vector<ad::Var> out;
  for (std::size_t l = 0; l < conv_weights_.size(); ++l) {
    const auto g = layer_geometry(batch, hh, ww, in);
    h = silu(conv2d(h, tape.constant(conv_weights_[l]), tape.constant(conv_biases_[l]), g));
    out.push_back(normalize_columns(h));
    hh = g.out_height();
    ww = g.out_width();
    in = channels_[l];
  }
  return out;
}

std::vector<ad::Matrix> PerceptualExtractor::features(const ad::Matrix& x) const {
  ad::Tape tape;
  std::vector<ad::Matrix> out;
  for (const auto& v : features(tape, tape.constant(x))) out.push_back(v.value());
  return out;
}

ad::Matrix PerceptualExtractor::pooled_features(const ad::Matrix& x) const {
  const auto feats = features(x);
  const Eigen::Index batch = x.cols();
  Eigen::Index total = 0;
  for (const auto& f : feats) total += 2 * f.rows();
  ad::Matrix out(total, batch);
  Eigen::Index row = 0;
  for (const auto& f : feats) {
    const Eigen::Index positions = f.cols() / batch;
    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto blk = f.middleCols(b * positions, positions);
      const Eigen::VectorXd mu = blk.rowwise().mean();
      const Eigen::VectorXd var = (blk.colwise() - mu).array().square().rowwise().mean();
      out.block(row, b, f.rows(), 1) = mu;
      out.block(row + f.rows(), b, f.rows(), 1) = var.array().sqrt().matrix();
    }
    row += 2 * f.rows();
  }
  return out;
}

ad::Var lpips_loss(ad::Tape& tape, ad::Var x, ad::Var xhat, const PerceptualExtractor& e) {
  if (x.rows() != xhat.rows() || x.cols() != xhat.cols()) throw ShapeMismatch("lpips: batch shapes differ");
  const auto fx = e.features(tape, x);
  const auto fy = e.features(tape, xhat);
  ad::Var total;
  for (std::size_t l = 0; l < fx.size(); ++l) {
    const double positions = static_cast<double>(fx[l].cols());
    ad::Var d = scale(sum(square(sub(fx[l], fy[l]))), e.layer_weights()[l] / positions);
    total = l == 0 ? d : add(total, d);
  }
  return total;
}

double lpips_loss(const ad::Matrix& x, const ad::Matrix& xhat, const PerceptualExtractor& e) {
  ad::Tape tape;
  return lpips_loss(tape, tape.constant(x), tape.constant(xhat), e).scalar();
}

}  // namespace sketchtune
