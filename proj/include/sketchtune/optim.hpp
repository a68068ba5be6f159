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

#ifndef SKETCHTUNE_OPTIM_HPP_
#define SKETCHTUNE_OPTIM_HPP_

#include <string>
#include <vector>

#include "sketchtune/autodiff.hpp"

namespace sketchtune {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over a ParameterSet. Moment buffers are part of the checkpointed state.
class Adam {
 public:
  Adam() = default;
  Adam(const ad::ParameterSet& params, AdamOptions options);

  void step(ad::ParameterSet& params);

  const AdamOptions& options() const { return options_; }
  long long steps() const { return steps_; }

  /// Moments exported as named tensors ("adam.m.<param>", "adam.v.<param>").
  std::vector<std::pair<std::string, ad::Matrix>> state(const ad::ParameterSet& params) const;
  void load_state(const ad::ParameterSet& params,
                  const std::vector<std::pair<std::string, ad::Matrix>>& tensors, long long steps);

 private:
  AdamOptions options_;
  std::vector<ad::Matrix> m_, v_;
  long long steps_ = 0;
};

/// Global L2 norm of all parameter gradients.
double grad_norm(const ad::ParameterSet& params);

/// Scales gradients so their global norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(ad::ParameterSet& params, double max_norm);

bool grads_finite(const ad::ParameterSet& params);

}  // namespace sketchtune

#endif  // SKETCHTUNE_OPTIM_HPP_
