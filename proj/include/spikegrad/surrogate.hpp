// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <string>

#include "spikegrad/errors.hpp"
#include "spikegrad/shapes.hpp"
#include "spikegrad/tape.hpp"

namespace spikegrad {

/// How a spike activation obtains its backward behavior.
///  CustomBackward: one node with a handwritten backward rule.
///  Bypass:         y = g - sg(g) + sg(step(x)) where g' is the shape.
///  Inject:         y = h - sg(h) + sg(step(x)) with h = x * sg(shape(x)).
///  Fused:          the single-node form the graph optimizer rewrites to.
enum class Mechanism { CustomBackward, Bypass, Inject, Fused };

inline const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::CustomBackward: return "custom";
    case Mechanism::Bypass: return "bypass";
    case Mechanism::Inject: return "inject";
    case Mechanism::Fused: return "fused";
  }
  return "?";
}

inline std::optional<Mechanism> mechanism_from_name(const std::string& s) {
  if (s == "custom") return Mechanism::CustomBackward;
  if (s == "bypass") return Mechanism::Bypass;
  if (s == "inject") return Mechanism::Inject;
  if (s == "fused") return Mechanism::Fused;
  return std::nullopt;
}

/// Step activation, value in {0, 1}, strictly positive inputs fire.
template <class Real>
Var<Real> step(Tape<Real>& t, Var<Real> x) {
  return t.gt0(x);
}

/// Graph form of the gaussian bump. The operation order here mirrors
/// detail::eval_shape_elem exactly; both must change together.
template <class Real>
Var<Real> gaussian_graph(Tape<Real>& t, Var<Real> x, Real mu, Real sig) {
  Var<Real> d = t.sub(x, t.constant(mu));
  Var<Real> dd = t.mul(d, d);
  Var<Real> q = t.div(dd, t.constant(Real(2) * (sig * sig)));
  return t.exp(t.neg(q));
}

/// Graph form of the difference-of-gaussians bump; see gaussian_graph on
/// operation order.
template <class Real>
Var<Real> dblgaussian_graph(Tape<Real>& t, Var<Real> x, Real sig1, Real sig2, Real p) {
  Var<Real> g1 = gaussian_graph(t, x, Real(0), sig1);
  Var<Real> g2 = gaussian_graph(t, x, Real(0), sig2);
  Var<Real> a = t.mul(g1, t.constant(Real(1) + p));
  Var<Real> b = t.mul(g2, t.constant(p));
  return t.sub(a, b);
}

/// Graph form of a shape function, dispatching on kind. For TanhDeriv the
/// graph computes 1 - tanh(x)^2.
template <class Real>
Var<Real> shape_graph(Tape<Real>& t, Var<Real> x, const SurrogateShape& shape) {
  switch (shape.kind) {
    case ShapeKind::Gaussian:
      return gaussian_graph(t, x, Real(shape.mu), Real(shape.sig));
    case ShapeKind::DoubleGaussian:
      return dblgaussian_graph(t, x, Real(shape.sig1), Real(shape.sig2), Real(shape.p));
    case ShapeKind::TanhDeriv: {
      Var<Real> th = t.tanh(x);
      return t.sub(t.constant(Real(1)), t.mul(th, th));
    }
  }
  throw UsageError("unknown shape kind");
}

/// Antiderivative graph for shapes that have one in the op vocabulary.
/// Only TanhDeriv qualifies; the gaussian bumps have no closed form here.
template <class Real>
Var<Real> shape_antiderivative_graph(Tape<Real>& t, Var<Real> x, const SurrogateShape& shape) {
  if (shape.kind != ShapeKind::TanhDeriv)
    throw UnsupportedError(std::string("no antiderivative in the op vocabulary for shape '") +
                           shape_kind_name(shape.kind) + "'");
  return t.tanh(x);
}

/// Bypass construction: y = g - sg(g) + sg(f) with f = step(x) and g the
/// antiderivative of the shape. Forward cancels to f exactly (g - g is +0.0
/// for finite g, and +0.0 + f preserves f's bits); backward sees only g.
template <class Real>
Var<Real> spike_bypass(Tape<Real>& t, Var<Real> x, const SurrogateShape& shape) {
  Var<Real> g = shape_antiderivative_graph(t, x, shape);
  Var<Real> f = t.gt0(x);
  Var<Real> s = t.sub(g, t.detach(g));
  return t.add(s, t.detach(f));
}

/// Injection construction: h = x * sg(shape(x)); y = h - sg(h) + sg(f).
/// The product's derivative in x is the detached factor itself, so the
/// backward multiplies upstream gradients by shape(x) with no residual term.
template <class Real>
Var<Real> spike_inject(Tape<Real>& t, Var<Real> x, const SurrogateShape& shape) {
  Var<Real> d = shape_graph(t, x, shape);
  Var<Real> h = t.mul(x, t.detach(d));
  Var<Real> f = t.gt0(x);
  Var<Real> s = t.sub(h, t.detach(h));
  return t.add(s, t.detach(f));
}

/// Spike activation with the requested backward mechanism. Forward value is
/// bit-identical to step(x) for every mechanism.
template <class Real>
Var<Real> spike(Tape<Real>& t, Var<Real> x, const SurrogateShape& shape, Mechanism mech) {
  switch (mech) {
    case Mechanism::CustomBackward:
      return t.custom_grad(x, shape);
    case Mechanism::Bypass:
      return spike_bypass(t, x, shape);
    case Mechanism::Inject:
      return spike_inject(t, x, shape);
    case Mechanism::Fused: {
      Var<Real> d = shape_graph(t, x, shape);
      return t.fused_inject(x, d, t.gt0(x));
    }
  }
  throw UsageError("unknown mechanism");
}

}  // namespace spikegrad
