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

#ifndef SKETCHTUNE_AUTODIFF_HPP_
#define SKETCHTUNE_AUTODIFF_HPP_

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sketchtune::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Named trainable tensor. Gradients accumulate into `grad` on Tape::backward.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Ordered, name-addressable parameter collection owned by a model.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix init);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  Eigen::Index scalar_count() const;

  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  void zero_grad();
  Vector flat_values() const;
  Vector flat_grads() const;
  void set_flat_values(const Vector& v);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; invalid once the tape is destroyed.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape over dense double matrices.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Var constant(Matrix value);
  Var parameter(Parameter& p);
  Var push(Matrix value, Backward backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  void accumulate(std::size_t id, const Matrix& g);

  /// Seeds the 1x1 root with `seed` and propagates to every parameter leaf.
  void backward(const Var& root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;
};

/// Geometry of a 2-D convolution applied to a batch laid out as (channels, batch*H*W).
struct ConvGeometry {
  int batch = 1;
  int height = 0;
  int width = 0;
  int channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  int out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cwise_mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);
/// a + b broadcast along columns; b is (rows, 1).
Var add_bias(Var a, Var b);
Var silu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var abs(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
/// Column-major reshape.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Rows [begin, begin+count).
Var row_slice(Var a, Eigen::Index begin, Eigen::Index count);
/// Divides every column by sqrt(sum of squares + eps).
Var normalize_columns(Var a, double eps = 1e-10);
Var im2col(Var x, const ConvGeometry& g);
/// Convolution: weight (out, in*k*k), bias (out, 1). Output laid out as (out, batch*Ho*Wo).
Var conv2d(Var x, Var weight, Var bias, const ConvGeometry& g);
/// Per-sample feature-wise affine modulation: h * (1 + scale_b) + shift_b, where
/// h is (C, batch*positions) and scale/shift are (C, batch).
Var film(Var h, Var scale, Var shift, Eigen::Index positions);
/// Attention pooling of fixed token sequences with a learned query (D,1).
/// tokens[b] is (D, L_b); the result is (D, batch).
Var attention_pool(const std::vector<const Matrix*>& tokens, Var query);

/// Mean squared error between equally shaped operands.
Var mse(Var a, Var b);

}  // namespace sketchtune::ad

#endif  // SKETCHTUNE_AUTODIFF_HPP_
