// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "spikegrad/errors.hpp"

namespace spikegrad {

namespace detail {

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return "scalar";
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

}  // namespace detail

/// Dense row-major n-dimensional array. A scalar is rank 0 with one element.
/// Tensors are immutable value types as far as the rest of the library is
/// concerned; operations return fresh tensors.
template <class Real>
class Tensor {
 public:
  Tensor() : shape_{}, data_{Real(0)} {}

  Tensor(std::vector<std::size_t> shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != detail::shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + detail::shape_str(shape_));
    }
  }

  static Tensor scalar(Real v) { return Tensor({}, {v}); }

  static Tensor zeros(std::vector<std::size_t> shape) {
    std::vector<Real> d(detail::shape_numel(shape), Real(0));
    return Tensor(std::move(shape), std::move(d));
  }

  static Tensor ones(std::vector<std::size_t> shape) { return full(std::move(shape), Real(1)); }

  static Tensor full(std::vector<std::size_t> shape, Real v) {
    std::vector<Real> d(detail::shape_numel(shape), v);
    return Tensor(std::move(shape), std::move(d));
  }

  /// Rank-1 tensor from a list of values.
  static Tensor vector(std::vector<Real> values) {
    std::vector<std::size_t> shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
  }

  /// Rank-2 tensor from nested initializer lists; rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Real> d;
    d.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("matrix rows have unequal lengths");
      d.insert(d.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(d));
  }

  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool is_scalar() const { return shape_.empty(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }

  Real& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const Real& at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  const std::vector<Real>& data() const { return data_; }
  std::vector<Real>& data() { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// Bitwise equality (shape and every element's bit pattern, so NaNs with
  /// equal payloads compare equal and +0.0 differs from -0.0).
  bool bit_equal(const Tensor& o) const {
    return shape_ == o.shape_ &&
           std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(Real)) == 0;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<Real> data_;
};

enum class ElemOp { Add, Sub, Mul, Div };
enum class UnaryOp { Exp, Tanh, Neg, Gt0 };

namespace detail {

template <class Real>
inline Real apply_elem(ElemOp op, Real a, Real b) {
  switch (op) {
    case ElemOp::Add: return a + b;
    case ElemOp::Sub: return a - b;
    case ElemOp::Mul: return a * b;
    case ElemOp::Div: return a / b;  // IEEE semantics: 0 divisor yields inf/NaN
  }
  return Real(0);
}

template <class Real>
inline Real apply_unary(UnaryOp op, Real v) {
  switch (op) {
    case UnaryOp::Exp: return std::exp(v);
    case UnaryOp::Tanh: return std::tanh(v);
    case UnaryOp::Neg: return -v;
    case UnaryOp::Gt0: return v > Real(0) ? Real(1) : Real(0);
  }
  return Real(0);
}

}  // namespace detail

/// Elementwise binary operation. Shapes must match, or one operand may be a
/// scalar (rank 0), which is broadcast; general broadcasting is not supported.
template <class Real>
Tensor<Real> elementwise(ElemOp op, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.same_shape(b)) {
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::apply_elem(op, a[i], b[i]);
    return Tensor<Real>(a.shape(), std::move(out));
  }
  if (b.is_scalar()) {
    const Real s = b[0];
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::apply_elem(op, a[i], s);
    return Tensor<Real>(a.shape(), std::move(out));
  }
  if (a.is_scalar()) {
    const Real s = a[0];
    std::vector<Real> out(b.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::apply_elem(op, s, b[i]);
    return Tensor<Real>(b.shape(), std::move(out));
  }
  throw ShapeError("elementwise operands " + detail::shape_str(a.shape()) + " and " +
                   detail::shape_str(b.shape()) + " do not match and neither is scalar");
}

template <class Real>
Tensor<Real> map_unary(UnaryOp op, const Tensor<Real>& a) {
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::apply_unary(op, a[i]);
  return Tensor<Real>(a.shape(), std::move(out));
}

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise(ElemOp::Add, a, b);
}
template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise(ElemOp::Sub, a, b);
}
template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise(ElemOp::Mul, a, b);
}
template <class Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise(ElemOp::Div, a, b);
}

template <class Real>
Tensor<Real> exp(const Tensor<Real>& a) {
  return map_unary(UnaryOp::Exp, a);
}
template <class Real>
Tensor<Real> tanh(const Tensor<Real>& a) {
  return map_unary(UnaryOp::Tanh, a);
}
template <class Real>
Tensor<Real> neg(const Tensor<Real>& a) {
  return map_unary(UnaryOp::Neg, a);
}
/// 1.0 where the element is strictly greater than zero, else 0.0.
template <class Real>
Tensor<Real> gt0(const Tensor<Real>& a) {
  return map_unary(UnaryOp::Gt0, a);
}

/// Rank-2 matrix product with a fixed left-to-right summation order over the
/// inner dimension, so repeated calls are bit-identical.
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul requires rank-2 operands, got " + detail::shape_str(a.shape()) +
                     " and " + detail::shape_str(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1);
  const std::size_t k2 = b.extent(0), n = b.extent(1);
  if (k != k2) {
    throw ShapeError("matmul inner dimensions disagree: " + detail::shape_str(a.shape()) +
                     " vs " + detail::shape_str(b.shape()));
  }
  Tensor<Real> out = Tensor<Real>::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = Real(0);
      for (std::size_t p = 0; p < k; ++p) acc += a.at2(i, p) * b.at2(p, j);
      out.at2(i, j) = acc;
    }
  }
  return out;
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  if (a.rank() != 2) throw ShapeError("transpose requires a rank-2 tensor");
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor<Real> out = Tensor<Real>::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at2(j, i) = a.at2(i, j);
  return out;
}

/// Sum of all elements (empty sum is 0), returned as a scalar.
template <class Real>
Tensor<Real> reduce_sum(const Tensor<Real>& a) {
  Real acc = Real(0);
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i];
  return Tensor<Real>::scalar(acc);
}

/// Sum along one axis; the axis is removed from the result shape. Summation
/// walks the axis in ascending index order.
template <class Real>
Tensor<Real> reduce_sum(const Tensor<Real>& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw ShapeError("reduce_sum axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(a.rank()));
  }
  std::size_t pre = 1, post = 1;
  for (std::size_t i = 0; i < axis; ++i) pre *= a.extent(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) post *= a.extent(i);
  const std::size_t n = a.extent(axis);

  std::vector<std::size_t> out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.extent(i));

  Tensor<Real> out = Tensor<Real>::zeros(out_shape);
  for (std::size_t p = 0; p < pre; ++p) {
    for (std::size_t q = 0; q < post; ++q) {
      Real acc = Real(0);
      for (std::size_t j = 0; j < n; ++j) acc += a[(p * n + j) * post + q];
      out[p * post + q] = acc;
    }
  }
  return out;
}

/// Elementwise value conversion between real types of the same shape.
template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& a) {
  std::vector<To> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(a[i]);
  return Tensor<To>(a.shape(), std::move(out));
}

/// a[m x n] plus a row vector b[n] added to every row.
template <class Real>
Tensor<Real> add_rowvec(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 1 || a.extent(1) != b.extent(0)) {
    throw ShapeError("add_rowvec expects [m x n] and [n], got " + detail::shape_str(a.shape()) +
                     " and " + detail::shape_str(b.shape()));
  }
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor<Real> out = Tensor<Real>::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at2(i, j) = a.at2(i, j) + b[j];
  return out;
}

}  // namespace spikegrad
