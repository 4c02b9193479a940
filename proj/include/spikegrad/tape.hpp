// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "spikegrad/errors.hpp"
#include "spikegrad/shapes.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

/// Operation kinds recorded on the tape. `gt0` (the step nonlinearity) has an
/// identically zero derivative at this level; all surrogate behavior enters
/// through the dedicated node kinds below it or through graph construction.
enum class OpKind {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Exp,
  Tanh,
  Neg,
  Gt0,
  MatMul,
  SumAll,
  SumAxis,
  AddRowVec,
  Detach,
  CustomGrad,    // step forward; backward multiplies upstream by a stored shape
  FusedInject,   // inputs (x, factor, fwd): forward = fwd, backward to x = upstream * factor
  FusedBypass,   // inputs (g, fwd): forward = fwd, backward routes upstream into g unchanged
  CrossEntropy,  // input (logits), labels in aux: mean stabilized NLL
};

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Exp: return "exp";
    case OpKind::Tanh: return "tanh";
    case OpKind::Neg: return "neg";
    case OpKind::Gt0: return "gt0";
    case OpKind::MatMul: return "matmul";
    case OpKind::SumAll: return "sum";
    case OpKind::SumAxis: return "sum_axis";
    case OpKind::AddRowVec: return "add_rowvec";
    case OpKind::Detach: return "detach";
    case OpKind::CustomGrad: return "custom_grad";
    case OpKind::FusedInject: return "fused_inject";
    case OpKind::FusedBypass: return "fused_bypass";
    case OpKind::CrossEntropy: return "cross_entropy";
  }
  return "?";
}

inline std::optional<OpKind> op_kind_from_name(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(OpKind::CrossEntropy); ++k) {
    const auto kind = static_cast<OpKind>(k);
    if (s == op_kind_name(kind)) return kind;
  }
  return std::nullopt;
}

/// Per-node payload beyond inputs: reduction axis, surrogate shape, or class
/// labels, depending on the kind.
using NodeAux = std::variant<std::monostate, int, SurrogateShape, std::vector<int>>;

/// One recorded operation. Inputs refer to earlier node indices only, so the
/// node list is topologically ordered by construction.
struct Node {
  OpKind kind = OpKind::Leaf;
  std::vector<std::uint32_t> inputs;
  bool requires_grad = false;
  NodeAux aux;
  std::string tag;  // optional stable name, preserved by graph rewrites
};

using NodeId = std::uint32_t;

template <class Real>
class Tape;

/// Lightweight handle to a tape node.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  NodeId id = 0;

  const Tensor<Real>& value() const { return tape->value_of(id); }
};

/// Gradients of one backward pass, keyed by leaf node id. Every
/// requires-grad leaf of the tape appears, with zeros when no gradient path
/// reached it.
template <class Real>
class GradientMap {
 public:
  bool contains(Var<Real> v) const { return grads_.count(v.id) != 0; }
  bool contains(NodeId id) const { return grads_.count(id) != 0; }

  const Tensor<Real>& at(Var<Real> v) const { return at(v.id); }
  const Tensor<Real>& at(NodeId id) const {
    auto it = grads_.find(id);
    if (it == grads_.end()) throw UsageError("no gradient recorded for node " + std::to_string(id));
    return it->second;
  }

  std::size_t size() const { return grads_.size(); }

  void insert(NodeId id, Tensor<Real> g) { grads_.emplace(id, std::move(g)); }

 private:
  std::map<NodeId, Tensor<Real>> grads_;
};

namespace detail {

inline const std::vector<int>& labels_of(const Node& nd) {
  const auto* l = std::get_if<std::vector<int>>(&nd.aux);
  if (!l) throw UsageError("cross-entropy node is missing its labels");
  return *l;
}

/// Forward evaluation of a non-leaf node from already computed input values.
/// Used both by the eager tape and by the snapshot replay executor, so the
/// two paths are numerically identical by construction.
template <class Real>
Tensor<Real> eval_node(const Node& nd, const std::vector<Tensor<Real>>& values) {
  auto in = [&](std::size_t i) -> const Tensor<Real>& { return values[nd.inputs[i]]; };
  switch (nd.kind) {
    case OpKind::Leaf: throw UsageError("leaf nodes carry their value, they are not evaluated");
    case OpKind::Add: return add(in(0), in(1));
    case OpKind::Sub: return sub(in(0), in(1));
    case OpKind::Mul: return mul(in(0), in(1));
    case OpKind::Div: return div(in(0), in(1));
    case OpKind::Exp: return exp(in(0));
    case OpKind::Tanh: return tanh(in(0));
    case OpKind::Neg: return neg(in(0));
    case OpKind::Gt0: return gt0(in(0));
    case OpKind::MatMul: return matmul(in(0), in(1));
    case OpKind::SumAll: return reduce_sum(in(0));
    case OpKind::SumAxis: return reduce_sum(in(0), static_cast<std::size_t>(std::get<int>(nd.aux)));
    case OpKind::AddRowVec: return add_rowvec(in(0), in(1));
    case OpKind::Detach: return in(0);
    case OpKind::CustomGrad: return gt0(in(0));
    case OpKind::FusedInject: return in(2);
    case OpKind::FusedBypass: return in(1);
    case OpKind::CrossEntropy: {
      const Tensor<Real>& logits = in(0);
      const auto& labels = labels_of(nd);
      if (logits.rank() != 2) throw ShapeError("cross-entropy expects [batch x classes] logits");
      const std::size_t b = logits.extent(0), c = logits.extent(1);
      if (labels.size() != b) throw UsageError("cross-entropy labels/batch size mismatch");
      Real total = Real(0);
      for (std::size_t i = 0; i < b; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
          throw UsageError("cross-entropy label out of range: " + std::to_string(y));
        Real m = logits.at2(i, 0);
        for (std::size_t j = 1; j < c; ++j) m = logits.at2(i, j) > m ? logits.at2(i, j) : m;
        Real s = Real(0);
        for (std::size_t j = 0; j < c; ++j) s += std::exp(logits.at2(i, j) - m);
        total += std::log(s) - (logits.at2(i, static_cast<std::size_t>(y)) - m);
      }
      return Tensor<Real>::scalar(total / Real(b));
    }
  }
  throw UsageError("unknown op kind");
}

/// Reverse accumulation over a node list. `grads[root]` must hold the seed;
/// nodes are visited exactly once, in reverse index order. The first
/// contribution to a node is moved in, later ones are added, so pass-through
/// edges preserve bit patterns exactly.
template <class Real>
void backprop(const std::vector<Node>& nodes, const std::vector<Tensor<Real>>& values,
              NodeId root, std::vector<std::optional<Tensor<Real>>>& grads) {
  auto acc = [&](NodeId input, Tensor<Real>&& contrib) {
    if (!nodes[input].requires_grad) return;
    if (values[input].is_scalar() && !contrib.is_scalar()) contrib = reduce_sum(contrib);
    if (!grads[input]) {
      grads[input] = std::move(contrib);
    } else {
      auto& g = *grads[input];
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += contrib[i];
    }
  };

  for (NodeId i = root;; --i) {
    if (grads[i]) {
      const Node& nd = nodes[i];
      const Tensor<Real>& up = *grads[i];
      auto inv = [&](std::size_t k) -> const Tensor<Real>& { return values[nd.inputs[k]]; };
      switch (nd.kind) {
        case OpKind::Leaf:
        case OpKind::Gt0:
        case OpKind::Detach:
          break;
        case OpKind::Add:
          acc(nd.inputs[0], Tensor<Real>(up));
          acc(nd.inputs[1], Tensor<Real>(up));
          break;
        case OpKind::Sub:
          acc(nd.inputs[0], Tensor<Real>(up));
          acc(nd.inputs[1], neg(up));
          break;
        case OpKind::Mul:
          acc(nd.inputs[0], mul(up, inv(1)));
          acc(nd.inputs[1], mul(up, inv(0)));
          break;
        case OpKind::Div: {
          acc(nd.inputs[0], div(up, inv(1)));
          Tensor<Real> t = mul(up, inv(0));
          acc(nd.inputs[1], neg(div(t, mul(inv(1), inv(1)))));
          break;
        }
        case OpKind::Exp:
          acc(nd.inputs[0], mul(up, values[i]));
          break;
        case OpKind::Tanh: {
          const Tensor<Real>& t = values[i];
          Tensor<Real> d = sub(Tensor<Real>::scalar(Real(1)), mul(t, t));
          acc(nd.inputs[0], mul(d, up));
          break;
        }
        case OpKind::Neg:
          acc(nd.inputs[0], neg(up));
          break;
        case OpKind::MatMul:
          acc(nd.inputs[0], matmul(up, transpose(inv(1))));
          acc(nd.inputs[1], matmul(transpose(inv(0)), up));
          break;
        case OpKind::SumAll:
          acc(nd.inputs[0], Tensor<Real>::full(inv(0).shape(), up[0]));
          break;
        case OpKind::SumAxis: {
          const Tensor<Real>& x = inv(0);
          const auto axis = static_cast<std::size_t>(std::get<int>(nd.aux));
          std::size_t pre = 1, post = 1;
          for (std::size_t k = 0; k < axis; ++k) pre *= x.extent(k);
          for (std::size_t k = axis + 1; k < x.rank(); ++k) post *= x.extent(k);
          const std::size_t n = x.extent(axis);
          Tensor<Real> contrib = Tensor<Real>::zeros(x.shape());
          for (std::size_t p = 0; p < pre; ++p)
            for (std::size_t j = 0; j < n; ++j)
              for (std::size_t q = 0; q < post; ++q)
                contrib[(p * n + j) * post + q] = up[p * post + q];
          acc(nd.inputs[0], std::move(contrib));
          break;
        }
        case OpKind::AddRowVec:
          acc(nd.inputs[0], Tensor<Real>(up));
          acc(nd.inputs[1], reduce_sum(up, 0));
          break;
        case OpKind::CustomGrad: {
          const auto& shape = std::get<SurrogateShape>(nd.aux);
          acc(nd.inputs[0], mul(up, eval_shape(shape, inv(0))));
          break;
        }
        case OpKind::FusedInject:
          acc(nd.inputs[0], mul(up, inv(1)));
          break;
        case OpKind::FusedBypass:
          acc(nd.inputs[0], Tensor<Real>(up));
          break;
        case OpKind::CrossEntropy: {
          const Tensor<Real>& logits = inv(0);
          const auto& labels = labels_of(nd);
          const std::size_t b = logits.extent(0), c = logits.extent(1);
          const Real factor = up[0] / Real(b);
          Tensor<Real> contrib = Tensor<Real>::zeros(logits.shape());
          for (std::size_t r = 0; r < b; ++r) {
            Real m = logits.at2(r, 0);
            for (std::size_t j = 1; j < c; ++j) m = logits.at2(r, j) > m ? logits.at2(r, j) : m;
            Real s = Real(0);
            for (std::size_t j = 0; j < c; ++j) s += std::exp(logits.at2(r, j) - m);
            for (std::size_t j = 0; j < c; ++j) {
              const Real p = std::exp(logits.at2(r, j) - m) / s;
              const Real oh = static_cast<std::size_t>(labels[r]) == j ? Real(1) : Real(0);
              contrib.at2(r, j) = (p - oh) * factor;
            }
          }
          acc(nd.inputs[0], std::move(contrib));
          break;
        }
      }
    }
    if (i == 0) break;
  }
}

}  // namespace detail

/// Append-only record of differentiable operations. Values are computed
/// eagerly as nodes are recorded (define-by-run); `backward` replays the
/// record in reverse. A tape is single-threaded; distinct tapes are
/// independent.
template <class Real>
class Tape {
 public:
  Var<Real> leaf(Tensor<Real> t, bool requires_grad) {
    Node nd;
    nd.kind = OpKind::Leaf;
    nd.requires_grad = requires_grad;
    return push(std::move(nd), std::move(t));
  }

  Var<Real> constant(Real v) { return leaf(Tensor<Real>::scalar(v), false); }
  Var<Real> constant(Tensor<Real> t) { return leaf(std::move(t), false); }

  Var<Real> add(Var<Real> a, Var<Real> b) { return binary(OpKind::Add, a, b); }
  Var<Real> sub(Var<Real> a, Var<Real> b) { return binary(OpKind::Sub, a, b); }
  Var<Real> mul(Var<Real> a, Var<Real> b) { return binary(OpKind::Mul, a, b); }
  Var<Real> div(Var<Real> a, Var<Real> b) { return binary(OpKind::Div, a, b); }

  Var<Real> exp(Var<Real> a) { return unary(OpKind::Exp, a); }
  Var<Real> tanh(Var<Real> a) { return unary(OpKind::Tanh, a); }
  Var<Real> neg(Var<Real> a) { return unary(OpKind::Neg, a); }

  /// Step nonlinearity: 1.0 for strictly positive input. Its derivative is
  /// identically zero on the tape.
  Var<Real> gt0(Var<Real> a) {
    check_tape(a);
    Node nd;
    nd.kind = OpKind::Gt0;
    nd.inputs = {a.id};
    nd.requires_grad = false;
    return push_eval(std::move(nd));
  }

  Var<Real> matmul(Var<Real> a, Var<Real> b) { return binary(OpKind::MatMul, a, b); }

  Var<Real> sum(Var<Real> a) { return unary(OpKind::SumAll, a); }

  Var<Real> sum(Var<Real> a, std::size_t axis) {
    check_tape(a);
    Node nd;
    nd.kind = OpKind::SumAxis;
    nd.inputs = {a.id};
    nd.requires_grad = nodes_[a.id].requires_grad;
    nd.aux = static_cast<int>(axis);
    return push_eval(std::move(nd));
  }

  Var<Real> add_rowvec(Var<Real> a, Var<Real> b) { return binary(OpKind::AddRowVec, a, b); }

  /// Identity forward; the backward edge into this node is discarded, so
  /// nothing upstream of it receives gradient through this use.
  Var<Real> detach(Var<Real> a) {
    check_tape(a);
    Node nd;
    nd.kind = OpKind::Detach;
    nd.inputs = {a.id};
    nd.requires_grad = false;
    return push_eval(std::move(nd));
  }

  /// Step activation whose backward multiplies the upstream gradient by the
  /// shape function evaluated at the input.
  Var<Real> custom_grad(Var<Real> x, const SurrogateShape& shape) {
    check_tape(x);
    Node nd;
    nd.kind = OpKind::CustomGrad;
    nd.inputs = {x.id};
    nd.requires_grad = nodes_[x.id].requires_grad;
    nd.aux = shape;
    return push_eval(std::move(nd));
  }

  /// Single-node form of the injection triple: forward takes `fwd`'s value,
  /// backward multiplies the upstream gradient by `factor`'s value into `x`.
  /// Neither `factor` nor `fwd` receives gradient.
  Var<Real> fused_inject(Var<Real> x, Var<Real> factor, Var<Real> fwd) {
    check_tape(x);
    check_tape(factor);
    check_tape(fwd);
    if (!x.value().same_shape(factor.value()) || !x.value().same_shape(fwd.value()))
      throw ShapeError("fused_inject operands must share one shape");
    Node nd;
    nd.kind = OpKind::FusedInject;
    nd.inputs = {x.id, factor.id, fwd.id};
    nd.requires_grad = nodes_[x.id].requires_grad;
    return push_eval(std::move(nd));
  }

  /// Single-node form of the bypass triple: forward takes `fwd`'s value,
  /// backward routes the upstream gradient into `g` unchanged.
  Var<Real> fused_bypass(Var<Real> g, Var<Real> fwd) {
    check_tape(g);
    check_tape(fwd);
    if (!g.value().same_shape(fwd.value()))
      throw ShapeError("fused_bypass operands must share one shape");
    Node nd;
    nd.kind = OpKind::FusedBypass;
    nd.inputs = {g.id, fwd.id};
    nd.requires_grad = nodes_[g.id].requires_grad;
    return push_eval(std::move(nd));
  }

  /// Mean softmax cross-entropy of the rows of `logits` against integer
  /// labels, stabilized by per-row max subtraction.
  Var<Real> cross_entropy(Var<Real> logits, std::vector<int> labels) {
    check_tape(logits);
    Node nd;
    nd.kind = OpKind::CrossEntropy;
    nd.inputs = {logits.id};
    nd.requires_grad = nodes_[logits.id].requires_grad;
    nd.aux = std::move(labels);
    return push_eval(std::move(nd));
  }

  void set_tag(Var<Real> v, std::string tag) {
    check_tape(v);
    for (char c : tag)
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
        throw ValueError("tags must not contain whitespace: '" + tag + "'");
    nodes_[v.id].tag = std::move(tag);
  }

  const Tensor<Real>& value_of(NodeId id) const { return values_[id]; }
  const Node& node(NodeId id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Tensor<Real>>& values() const { return values_; }

  /// Reverse-mode gradient accumulation from `root`. The root must be scalar
  /// unless a seed of the root's shape is supplied. Every requires-grad leaf
  /// appears in the result, with zeros when no gradient path reached it.
  GradientMap<Real> backward(Var<Real> root, const Tensor<Real>* seed = nullptr) {
    check_tape(root);
    const Tensor<Real>& rv = values_[root.id];
    Tensor<Real> seed_t;
    if (seed) {
      if (!seed->same_shape(rv)) throw ShapeError("backward seed shape does not match root");
      seed_t = *seed;
    } else {
      if (rv.numel() != 1) throw UsageError("backward root is not scalar and no seed was given");
      seed_t = Tensor<Real>::full(rv.shape(), Real(1));
    }

    std::vector<std::optional<Tensor<Real>>> grads(root.id + 1);
    grads[root.id] = std::move(seed_t);
    detail::backprop(nodes_, values_, root.id, grads);

    GradientMap<Real> out;
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].kind == OpKind::Leaf && nodes_[i].requires_grad) {
        if (i <= root.id && grads[i])
          out.insert(i, std::move(*grads[i]));
        else
          out.insert(i, Tensor<Real>::zeros(values_[i].shape()));
      }
    }
    return out;
  }

 private:
  Var<Real> binary(OpKind kind, Var<Real> a, Var<Real> b) {
    check_tape(a);
    check_tape(b);
    Node nd;
    nd.kind = kind;
    nd.inputs = {a.id, b.id};
    nd.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    return push_eval(std::move(nd));
  }

  Var<Real> unary(OpKind kind, Var<Real> a) {
    check_tape(a);
    Node nd;
    nd.kind = kind;
    nd.inputs = {a.id};
    nd.requires_grad = nodes_[a.id].requires_grad;
    return push_eval(std::move(nd));
  }

  Var<Real> push_eval(Node nd) {
    Tensor<Real> v = detail::eval_node(nd, values_);
    return push(std::move(nd), std::move(v));
  }

  Var<Real> push(Node nd, Tensor<Real> value) {
    nodes_.push_back(std::move(nd));
    values_.push_back(std::move(value));
    return Var<Real>{this, static_cast<NodeId>(nodes_.size() - 1)};
  }

  void check_tape(Var<Real> v) const {
    if (v.tape != this) throw UsageError("variable belongs to a different tape");
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<Real>> values_;
};

template <class Real>
Var<Real> operator+(Var<Real> a, Var<Real> b) {
  return a.tape->add(a, b);
}
template <class Real>
Var<Real> operator-(Var<Real> a, Var<Real> b) {
  return a.tape->sub(a, b);
}
template <class Real>
Var<Real> operator*(Var<Real> a, Var<Real> b) {
  return a.tape->mul(a, b);
}
template <class Real>
Var<Real> operator/(Var<Real> a, Var<Real> b) {
  return a.tape->div(a, b);
}

/// Maximum relative disagreement between the taped gradient of sum(f(x)) and
/// a central finite difference with step h, over the elements of x. `f` maps
/// (tape, var) to a var on the same tape.
template <class Real, class F>
double grad_check(F&& f, const Tensor<Real>& x, Real h) {
  auto objective = [&](const Tensor<Real>& xt) -> double {
    Tape<Real> t;
    Var<Real> xv = t.leaf(xt, false);
    Var<Real> y = f(t, xv);
    return static_cast<double>(reduce_sum(y.value())[0]);
  };

  Tape<Real> t;
  Var<Real> xv = t.leaf(x, true);
  Var<Real> s = t.sum(f(t, xv));
  GradientMap<Real> grads = t.backward(s);
  const Tensor<Real>& ad = grads.at(xv);

  double max_err = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor<Real> xp = x;
    Tensor<Real> xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (objective(xp) - objective(xm)) / (2.0 * static_cast<double>(h));
    const double err = std::abs(static_cast<double>(ad[i]) - fd) / (std::abs(fd) + 1e-12);
    if (err > max_err) max_err = err;
  }
  return max_err;
}

}  // namespace spikegrad
