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

#ifndef SKETCHTUNE_TESTS_TEST_SUPPORT_HPP_
#define SKETCHTUNE_TESTS_TEST_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Core>

#include "sketchtune/autodiff.hpp"

namespace sketchtune::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("sketchtune-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// |a - f| / max(|a|, |f|, floor); the floor keeps near-zero coordinates from dominating.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_rel_error = 0.0;
  Eigen::Index worst = -1;
  Eigen::Index checked = 0;
};

/// Compares the tape gradient of loss() against central differences over every scalar of params.
/// loss must build a fresh tape from the current parameter values on every call.
inline GradCheck check_gradients(ad::ParameterSet& params, const std::function<ad::Var(ad::Tape&)>& loss,
                                 double h = 1e-5) {
  params.zero_grad();
  {
    ad::Tape tape;
    tape.backward(loss(tape));
  }
  const Eigen::VectorXd analytic = params.flat_grads();
  Eigen::VectorXd theta = params.flat_values();
  auto value_at = [&](const Eigen::VectorXd& v) {
    params.set_flat_values(v);
    ad::Tape tape;
    return loss(tape).scalar();
  };
  GradCheck out;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd plus = theta, minus = theta;
    plus(i) += h;
    minus(i) -= h;
    const double numeric = (value_at(plus) - value_at(minus)) / (2 * h);
    const double err = relative_error(analytic(i), numeric);
    if (err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst = i;
    }
    ++out.checked;
  }
  params.set_flat_values(theta);
  return out;
}

}  // namespace sketchtune::testing

#endif  // SKETCHTUNE_TESTS_TEST_SUPPORT_HPP_
