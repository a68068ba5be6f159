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

#ifndef SKETCHTUNE_PERCEPTUAL_HPP_
#define SKETCHTUNE_PERCEPTUAL_HPP_

#include <cstdint>
#include <vector>

#include "sketchtune/autodiff.hpp"

namespace sketchtune {

/// Frozen convolutional feature stack phi_l with per-layer weights w_l.
///
/// Inputs are grayscale batches laid out (height*width, batch) in [0,1], row-major pixels.
/// Each layer is a 3x3 stride-2 convolution followed by SiLU; features are unit-normalized
/// across channels at every spatial position before distances are taken.
class PerceptualExtractor {
 public:
  PerceptualExtractor() = default;

  /// Fixed-seed random stack, the offline stand-in for a pretrained network.
  static PerceptualExtractor toy(int height, int width, std::uint64_t seed,
                                 std::vector<int> channels = {8, 16, 32},
                                 std::vector<double> layer_weights = {});

  bool available() const { return !conv_weights_.empty(); }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t layer_count() const { return conv_weights_.size(); }
  const std::vector<double>& layer_weights() const { return layer_weights_; }
  std::uint64_t seed() const { return seed_; }

  /// Unit-normalized features per layer, each (channels_l, batch*H_l*W_l).
  std::vector<ad::Var> features(ad::Tape& tape, ad::Var x) const;
  std::vector<ad::Matrix> features(const ad::Matrix& x) const;

  /// Per-image descriptor: spatial mean and std of each normalized channel, concatenated.
  /// Shape (2 * total channels, batch). Used as the offline FID feature.
  ad::Matrix pooled_features(const ad::Matrix& x) const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<int> channels_;
  std::vector<ad::Matrix> conv_weights_;
  std::vector<ad::Matrix> conv_biases_;
  std::vector<double> layer_weights_;
};

/// sum_l w_l * mean over positions and batch of ||n(phi_l(x)) - n(phi_l(xhat))||^2.
ad::Var lpips_loss(ad::Tape& tape, ad::Var x, ad::Var xhat, const PerceptualExtractor& e);
double lpips_loss(const ad::Matrix& x, const ad::Matrix& xhat, const PerceptualExtractor& e);

}  // namespace sketchtune

#endif  // SKETCHTUNE_PERCEPTUAL_HPP_
