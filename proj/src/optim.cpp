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

#include "sketchtune/optim.hpp"

#include <cmath>

#include "sketchtune/error.hpp"

namespace sketchtune {

Adam::Adam(const ad::ParameterSet& params, AdamOptions options) : options_(options) {
  for (const auto& p : params) {
    m_.push_back(ad::Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(ad::Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ad::ParameterSet& params) {
  if (params.size() != m_.size()) throw ShapeMismatch("optimizer built for a different parameter set");
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * p.grad;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= options_.learning_rate * (m_[i].array() / bc1) /
                       ((v_[i].array() / bc2).sqrt() + options_.epsilon);
  }
}

std::vector<std::pair<std::string, ad::Matrix>> Adam::state(const ad::ParameterSet& params) const {
  std::vector<std::pair<std::string, ad::Matrix>> out;
  for (std::size_t i = 0; i < m_.size(); ++i) {
    out.emplace_back("adam.m." + params[i].name, m_[i]);
    out.emplace_back("adam.v." + params[i].name, v_[i]);
  }
  return out;
}

void Adam::load_state(const ad::ParameterSet& params,
                      const std::vector<std::pair<std::string, ad::Matrix>>& tensors, long long steps) {
  auto lookup = [&](const std::string& name) -> const ad::Matrix& {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw FormatError("optimizer state missing " + name);
  };
  m_.clear();
  v_.clear();
  for (const auto& p : params) {
    m_.push_back(lookup("adam.m." + p.name));
    v_.push_back(lookup("adam.v." + p.name));
  }
  steps_ = steps;
}

double grad_norm(const ad::ParameterSet& params) {
  double sq = 0.0;
  for (const auto& p : params) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(ad::ParameterSet& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params) p.grad *= s;
  }
  return norm;
}

bool grads_finite(const ad::ParameterSet& params) {
  for (const auto& p : params)
    if (!p.grad.allFinite()) return false;
  return true;
}

}  // namespace sketchtune
