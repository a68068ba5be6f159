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

#include "sketchtune/autodiff.hpp"

#include <cmath>

#include "sketchtune/error.hpp"

namespace sketchtune::ad {

std::size_t ParameterSet::add(std::string name, Matrix init) {
  Parameter p{std::move(name), std::move(init), Matrix()};
  p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

Eigen::Index ParameterSet::scalar_count() const {
  Eigen::Index n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

Vector ParameterSet::flat_values() const {
  Vector v(scalar_count());
  Eigen::Index off = 0;
  for (const auto& p : params_) {
    v.segment(off, p.value.size()) = p.value.reshaped();
    off += p.value.size();
  }
  return v;
}

Vector ParameterSet::flat_grads() const {
  Vector v(scalar_count());
  Eigen::Index off = 0;
  for (const auto& p : params_) {
    v.segment(off, p.grad.size()) = p.grad.reshaped();
    off += p.grad.size();
  }
  return v;
}

void ParameterSet::set_flat_values(const Vector& v) {
  if (v.size() != scalar_count()) throw ShapeMismatch("flat parameter vector has wrong length");
  Eigen::Index off = 0;
  for (auto& p : params_) {
    p.value.reshaped() = v.segment(off, p.value.size());
    off += p.value.size();
  }
}

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, Matrix(), false, nullptr, &p});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, std::move(backward), nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& root, double seed) {
  if (root.tape() != this || root.rows() != 1 || root.cols() != 1)
    throw InvalidArgument("backward needs a scalar root on this tape");
  accumulate(root.id(), Matrix::Constant(1, 1, seed));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch(std::string(op) + ": operand shapes differ");
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw InvalidArgument("operands live on different tapes");
  return *a.tape();
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  auto ia = a.id(), ib = b.id();
  return tape_of(a, b).push(a.value() + b.value(), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  auto ia = a.id(), ib = b.id();
  return tape_of(a, b).push(a.value() - b.value(), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var cwise_mul(Var a, Var b) {
  require_same_shape(a, b, "cwise_mul");
  auto ia = a.id(), ib = b.id();
  return tape_of(a, b).push(a.value().cwiseProduct(b.value()), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double s) {
  auto ia = a.id();
  return a.tape()->push(a.value() * s, [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var add_scalar(Var a, double s) {
  auto ia = a.id();
  return a.tape()->push((a.value().array() + s).matrix(),
                        [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: inner dimensions differ");
  auto ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return tape_of(a, b).push(std::move(out), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g * t.value(ib).transpose());
    t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add_bias(Var a, Var b) {
  if (b.cols() != 1 || b.rows() != a.rows()) throw ShapeMismatch("add_bias: bias must be (rows, 1)");
  auto ia = a.id(), ib = b.id();
  Matrix out = a.value().colwise() + b.value().col(0);
  return tape_of(a, b).push(std::move(out), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g.rowwise().sum());
  });
}

Var silu(Var a) {
  auto ia = a.id();
  const Eigen::ArrayXXd x = a.value().array();
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x).exp());
  Matrix out = (x * s).matrix();
  return a.tape()->push(std::move(out), [ia, s, x](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * (s * (1.0 + x * (1.0 - s)))).matrix());
  });
}

Var sigmoid(Var a) {
  auto ia = a.id();
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-a.value().array()).exp());
  return a.tape()->push(s.matrix(), [ia, s](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * s * (1.0 - s)).matrix());
  });
}

Var tanh(Var a) {
  auto ia = a.id();
  const Eigen::ArrayXXd y = a.value().array().tanh();
  return a.tape()->push(y.matrix(), [ia, y](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * (1.0 - y.square())).matrix());
  });
}

Var exp(Var a) {
  auto ia = a.id();
  const Eigen::ArrayXXd y = a.value().array().exp();
  return a.tape()->push(y.matrix(), [ia, y](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * y).matrix());
  });
}

Var abs(Var a) {
  auto ia = a.id();
  return a.tape()->push(a.value().cwiseAbs(), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * t.value(ia).array().sign()).matrix());
  });
}

Var square(Var a) {
  auto ia = a.id();
  return a.tape()->push(a.value().array().square().matrix(), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (2.0 * g.array() * t.value(ia).array()).matrix());
  });
}

Var sum(Var a) {
  auto ia = a.id();
  const auto r = a.rows(), c = a.cols();
  return a.tape()->push(Matrix::Constant(1, 1, a.value().sum()), [ia, r, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw InvalidArgument("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ShapeMismatch("reshape: element count differs");
  auto ia = a.id();
  const auto r0 = a.rows(), c0 = a.cols();
  Matrix out = a.value().reshaped(rows, cols);
  return a.tape()->push(std::move(out), [ia, r0, c0](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.reshaped(r0, c0));
  });
}

Var row_slice(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || begin + count > a.rows()) throw ShapeMismatch("row_slice out of range");
  auto ia = a.id();
  const auto r0 = a.rows(), c0 = a.cols();
  Matrix out = a.value().middleRows(begin, count);
  return a.tape()->push(std::move(out), [ia, r0, c0, begin, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(r0, c0);
    full.middleRows(begin, count) = g;
    t.accumulate(ia, full);
  });
}

Var normalize_columns(Var a, double eps) {
  auto ia = a.id();
  const Eigen::RowVectorXd norm = (a.value().colwise().squaredNorm().array() + eps).sqrt().matrix();
  Matrix out = a.value().array().rowwise() / norm.array();
  return a.tape()->push(std::move(out), [ia, norm](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(ia);
    const Eigen::RowVectorXd dot = (g.cwiseProduct(x)).colwise().sum();
    const Eigen::RowVectorXd inv = norm.cwiseInverse();
    Matrix dx = g.array().rowwise() * inv.array();
    dx.array() -= x.array().rowwise() * (dot.array() * inv.array().cube());
    t.accumulate(ia, dx);
  });
}

Var im2col(Var x, const ConvGeometry& g) {
  if (x.rows() != g.channels ||
      x.cols() != static_cast<Eigen::Index>(g.batch) * g.height * g.width)
    throw ShapeMismatch("im2col: input does not match geometry");
  const int ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  if (ho <= 0 || wo <= 0) throw ShapeMismatch("im2col: kernel larger than padded input");
  const Matrix& in = x.value();
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(g.channels) * k * k,
                             static_cast<Eigen::Index>(g.batch) * ho * wo);
  for (int b = 0; b < g.batch; ++b)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const Eigen::Index col = (static_cast<Eigen::Index>(b) * ho + oy) * wo + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.width) continue;
            const Eigen::Index src = (static_cast<Eigen::Index>(b) * g.height + iy) * g.width + ix;
            for (int c = 0; c < g.channels; ++c) cols((c * k + ky) * k + kx, col) = in(c, src);
          }
        }
      }
  auto ix_id = x.id();
  return x.tape()->push(std::move(cols), [ix_id, g, ho, wo, k](Tape& t, const Matrix& grad) {
    Matrix dx = Matrix::Zero(g.channels, static_cast<Eigen::Index>(g.batch) * g.height * g.width);
    for (int b = 0; b < g.batch; ++b)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          const Eigen::Index col = (static_cast<Eigen::Index>(b) * ho + oy) * wo + ox;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * g.stride - g.padding + ky;
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * g.stride - g.padding + kx;
              if (ix < 0 || ix >= g.width) continue;
              const Eigen::Index dst = (static_cast<Eigen::Index>(b) * g.height + iy) * g.width + ix;
              for (int c = 0; c < g.channels; ++c) dx(c, dst) += grad((c * k + ky) * k + kx, col);
            }
          }
        }
    t.accumulate(ix_id, dx);
  });
}

Var conv2d(Var x, Var weight, Var bias, const ConvGeometry& g) {
  return add_bias(matmul(weight, im2col(x, g)), bias);
}

Var film(Var h, Var scale_v, Var shift_v, Eigen::Index positions) {
  const Eigen::Index channels = h.rows();
  const Eigen::Index batch = scale_v.cols();
  if (scale_v.rows() != channels || shift_v.rows() != channels || shift_v.cols() != batch ||
      h.cols() != batch * positions)
    throw ShapeMismatch("film: modulation does not match features");
  const Matrix& hv = h.value();
  const Matrix& sv = scale_v.value();
  const Matrix& tv = shift_v.value();
  Matrix out(channels, h.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    auto blk = hv.middleCols(b * positions, positions);
    out.middleCols(b * positions, positions) =
        (blk.array().colwise() * (1.0 + sv.col(b).array())).colwise() + tv.col(b).array();
  }
  auto ih = h.id(), is = scale_v.id(), it = shift_v.id();
  return h.tape()->push(std::move(out), [ih, is, it, batch, positions](Tape& t, const Matrix& g) {
    const Matrix& hv = t.value(ih);
    const Matrix& sv = t.value(is);
    Matrix dh(hv.rows(), hv.cols());
    Matrix ds(sv.rows(), batch), dt(sv.rows(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      auto gb = g.middleCols(b * positions, positions);
      auto hb = hv.middleCols(b * positions, positions);
      dh.middleCols(b * positions, positions) = gb.array().colwise() * (1.0 + sv.col(b).array());
      ds.col(b) = gb.cwiseProduct(hb).rowwise().sum();
      dt.col(b) = gb.rowwise().sum();
    }
    t.accumulate(ih, dh);
    t.accumulate(is, ds);
    t.accumulate(it, dt);
  });
}

Var attention_pool(const std::vector<const Matrix*>& tokens, Var query) {
  const Eigen::Index dim = query.rows();
  if (query.cols() != 1) throw ShapeMismatch("attention_pool: query must be a column");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dim));
  const auto batch = static_cast<Eigen::Index>(tokens.size());
  Matrix out(dim, batch);
  std::vector<Eigen::VectorXd> weights(tokens.size());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Matrix& e = *tokens[b];
    if (e.rows() != dim || e.cols() == 0) throw ShapeMismatch("attention_pool: bad token matrix");
    Eigen::VectorXd s = e.transpose() * query.value().col(0) * inv_sqrt;
    s.array() -= s.maxCoeff();
    Eigen::VectorXd a = s.array().exp();
    a /= a.sum();
    out.col(b) = e * a;
    weights[b] = std::move(a);
  }
  auto iq = query.id();
  return query.tape()->push(std::move(out), [iq, tokens, weights, inv_sqrt, dim](Tape& t, const Matrix& g) {
    Matrix dq = Matrix::Zero(dim, 1);
    for (std::size_t b = 0; b < tokens.size(); ++b) {
      const Matrix& e = *tokens[b];
      const Eigen::VectorXd& a = weights[b];
      const Eigen::VectorXd da = e.transpose() * g.col(static_cast<Eigen::Index>(b));
      const Eigen::VectorXd ds = a.cwiseProduct((da.array() - a.dot(da)).matrix());
      dq.col(0) += e * ds * inv_sqrt;
    }
    t.accumulate(iq, dq);
  });
}

Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

}  // namespace sketchtune::ad
