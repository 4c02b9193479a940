// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <cmath>
#include <string>

#include "spikegrad/errors.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

enum class ShapeKind { Gaussian, DoubleGaussian, TanhDeriv };

inline const char* shape_kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Gaussian: return "gaussian";
    case ShapeKind::DoubleGaussian: return "dblgaussian";
    case ShapeKind::TanhDeriv: return "tanhderiv";
  }
  return "?";
}

/// Selection of the surrogate derivative function applied at the step
/// nonlinearity. Widths must be strictly positive.
struct SurrogateShape {
  ShapeKind kind = ShapeKind::Gaussian;
  // Gaussian parameters.
  double mu = 0.0;
  double sig = 0.5;
  // Double-Gaussian parameters (zero-centered, narrow minus wide tail).
  double sig1 = 0.5;
  double sig2 = 1.0;
  double p = 0.3;

  static SurrogateShape gaussian(double mu = 0.0, double sig = 0.5) {
    if (!(sig > 0.0)) throw ValueError("gaussian width must be positive");
    SurrogateShape s;
    s.kind = ShapeKind::Gaussian;
    s.mu = mu;
    s.sig = sig;
    return s;
  }

  static SurrogateShape double_gaussian(double sig1 = 0.5, double sig2 = 1.0, double p = 0.3) {
    if (!(sig1 > 0.0) || !(sig2 > 0.0)) throw ValueError("double-gaussian widths must be positive");
    if (p < 0.0) throw ValueError("double-gaussian mix factor must be non-negative");
    SurrogateShape s;
    s.kind = ShapeKind::DoubleGaussian;
    s.sig1 = sig1;
    s.sig2 = sig2;
    s.p = p;
    return s;
  }

  static SurrogateShape tanh_deriv() {
    SurrogateShape s;
    s.kind = ShapeKind::TanhDeriv;
    return s;
  }

  std::string name() const { return shape_kind_name(kind); }
};

/// Parses a shape selection by name, with the documented default parameters.
inline SurrogateShape shape_from_name(const std::string& s) {
  if (s == "gaussian") return SurrogateShape::gaussian();
  if (s == "dblgaussian") return SurrogateShape::double_gaussian();
  if (s == "tanhderiv") return SurrogateShape::tanh_deriv();
  throw ValueError("unknown shape '" + s + "' (expected gaussian, dblgaussian, or tanhderiv)");
}

namespace detail {

// Per-element shape evaluation. The operation order here intentionally
// mirrors the graph builders in surrogate.hpp so that a closed-form backward
// factor and a graph-computed one are bit-identical.
template <class Real>
inline Real eval_shape_elem(const SurrogateShape& s, Real x) {
  switch (s.kind) {
    case ShapeKind::Gaussian: {
      const Real d = x - Real(s.mu);
      const Real denom = Real(2) * (Real(s.sig) * Real(s.sig));
      return std::exp(-((d * d) / denom));
    }
    case ShapeKind::DoubleGaussian: {
      const Real denom1 = Real(2) * (Real(s.sig1) * Real(s.sig1));
      const Real denom2 = Real(2) * (Real(s.sig2) * Real(s.sig2));
      const Real g1 = std::exp(-((x * x) / denom1));
      const Real g2 = std::exp(-((x * x) / denom2));
      return g1 * (Real(1) + Real(s.p)) - g2 * Real(s.p);
    }
    case ShapeKind::TanhDeriv: {
      const Real t = std::tanh(x);
      return Real(1) - t * t;
    }
  }
  return Real(0);
}

}  // namespace detail

/// Evaluates the surrogate derivative shape elementwise on a plain tensor.
template <class Real>
Tensor<Real> eval_shape(const SurrogateShape& s, const Tensor<Real>& x) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::eval_shape_elem(s, x[i]);
  return Tensor<Real>(x.shape(), std::move(out));
}

}  // namespace spikegrad
