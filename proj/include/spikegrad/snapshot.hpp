// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spikegrad/errors.hpp"
#include "spikegrad/format.hpp"
#include "spikegrad/tape.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

/// Dynamic rebuilds the graph every step; Fused freezes one graph, rewrites
/// it, and replays it with fresh leaf values.
enum class GraphMode { Dynamic, Fused };

inline const char* graph_mode_name(GraphMode m) {
  return m == GraphMode::Dynamic ? "dynamic" : "fused";
}

inline GraphMode graph_mode_from_name(const std::string& name) {
  if (name == "dynamic") return GraphMode::Dynamic;
  if (name == "fused") return GraphMode::Fused;
  throw ValueError("unknown graph mode '" + name + "', expected dynamic or fused");
}

/// Frozen copy of a tape's structure plus its leaf values. Non-leaf values
/// are recomputed on replay; leaf shapes are part of the structure and fixed.
template <class Real>
struct Snapshot {
  std::vector<Node> nodes;
  std::vector<std::vector<std::size_t>> shapes;  // recorded output shape per node
  std::map<NodeId, Tensor<Real>> leaf_values;
};

template <class Real>
Snapshot<Real> take_snapshot(const Tape<Real>& tape) {
  Snapshot<Real> s;
  s.nodes = tape.nodes();
  s.shapes.reserve(s.nodes.size());
  for (NodeId i = 0; i < s.nodes.size(); ++i) {
    s.shapes.push_back(tape.values()[i].shape());
    if (s.nodes[i].kind == OpKind::Leaf) s.leaf_values.emplace(i, tape.values()[i]);
  }
  return s;
}

namespace detail {

inline int expected_arity(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return 0;
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::MatMul:
    case OpKind::AddRowVec:
    case OpKind::FusedBypass: return 2;
    case OpKind::FusedInject: return 3;
    default: return 1;
  }
}

}  // namespace detail

/// Structural integrity check: topological input order, arity, and the aux
/// payloads each kind requires. Throws ValidationError on the first problem.
template <class Real>
void validate(const Snapshot<Real>& s) {
  if (s.shapes.size() != s.nodes.size())
    throw ValidationError("snapshot shape table does not cover every node");
  for (NodeId i = 0; i < s.nodes.size(); ++i) {
    const Node& nd = s.nodes[i];
    const std::string at = " at node " + std::to_string(i);
    if (static_cast<int>(nd.inputs.size()) != detail::expected_arity(nd.kind))
      throw ValidationError(std::string("wrong input count for ") + op_kind_name(nd.kind) + at);
    for (NodeId in : nd.inputs)
      if (in >= i) throw ValidationError("input " + std::to_string(in) + " is not earlier" + at);
    switch (nd.kind) {
      case OpKind::SumAxis:
        if (!std::holds_alternative<int>(nd.aux))
          throw ValidationError("sum_axis node is missing its axis" + at);
        break;
      case OpKind::CustomGrad:
        if (!std::holds_alternative<SurrogateShape>(nd.aux))
          throw ValidationError("custom_grad node is missing its shape" + at);
        break;
      case OpKind::CrossEntropy:
        if (!std::holds_alternative<std::vector<int>>(nd.aux))
          throw ValidationError("cross_entropy node is missing its labels" + at);
        break;
      case OpKind::Leaf:
        if (s.leaf_values.count(i) && !(s.leaf_values.at(i).shape() == s.shapes[i]))
          throw ValidationError("leaf value shape disagrees with recorded shape" + at);
        break;
      default:
        break;
    }
  }
}

namespace detail {

inline std::string aux_str(const Node& nd) {
  std::string out;
  if (const int* axis = std::get_if<int>(&nd.aux)) {
    out += " axis=" + std::to_string(*axis);
  } else if (const auto* sh = std::get_if<SurrogateShape>(&nd.aux)) {
    out += " shape=" + sh->name();
    switch (sh->kind) {
      case ShapeKind::Gaussian:
        out += ":" + format_g17(sh->mu) + ":" + format_g17(sh->sig);
        break;
      case ShapeKind::DoubleGaussian:
        out += ":" + format_g17(sh->sig1) + ":" + format_g17(sh->sig2) + ":" + format_g17(sh->p);
        break;
      case ShapeKind::TanhDeriv:
        break;
    }
  } else if (const auto* labels = std::get_if<std::vector<int>>(&nd.aux)) {
    out += " labels=";
    for (std::size_t i = 0; i < labels->size(); ++i) {
      if (i) out += ',';
      out += std::to_string((*labels)[i]);
    }
  }
  return out;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::vector<std::size_t> parse_shape_str(const std::string& s) {
  if (s == "scalar") return {};
  std::vector<std::size_t> shape;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t next = s.find('x', pos);
    const std::string part = s.substr(pos, next == std::string::npos ? next : next - pos);
    try {
      shape.push_back(std::stoul(part));
    } catch (const std::exception&) {
      throw FormatError("bad shape token '" + s + "'");
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return shape;
}

}  // namespace detail

/// Textual graph dump, one node per line: index, op kind, comma-separated
/// input indices (or "-"), output shape, grad flag, then kind-specific
/// key=value fields and an optional tag. Parsable by parse_snapshot.
template <class Real>
std::string dump_snapshot(const Snapshot<Real>& s) {
  std::string out;
  for (NodeId i = 0; i < s.nodes.size(); ++i) {
    const Node& nd = s.nodes[i];
    out += std::to_string(i);
    out += ' ';
    out += op_kind_name(nd.kind);
    out += ' ';
    if (nd.inputs.empty()) {
      out += '-';
    } else {
      for (std::size_t k = 0; k < nd.inputs.size(); ++k) {
        if (k) out += ',';
        out += std::to_string(nd.inputs[k]);
      }
    }
    out += ' ';
    out += detail::shape_str(s.shapes[i]);
    out += nd.requires_grad ? " grad" : " nograd";
    out += detail::aux_str(nd);
    if (!nd.tag.empty()) {
      for (char c : nd.tag)
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
          throw FormatError("tag '" + nd.tag + "' contains whitespace and cannot be dumped");
      out += " tag=" + nd.tag;
    }
    out += '\n';
  }
  return out;
}

/// Inverse of dump_snapshot. Leaf values are zero-initialized at the
/// recorded shapes; the result passes validate() or a FormatError names the
/// offending line.
template <class Real>
Snapshot<Real> parse_snapshot(const std::string& text) {
  Snapshot<Real> snap;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto toks = detail::split_ws(line);
    const std::string where = " on line " + std::to_string(lineno);
    if (toks.size() < 5) throw FormatError("expected at least 5 fields" + where);
    std::size_t idx = 0;
    try {
      idx = std::stoul(toks[0]);
    } catch (const std::exception&) {
      throw FormatError("bad node index '" + toks[0] + "'" + where);
    }
    if (idx != snap.nodes.size())
      throw FormatError("node index " + toks[0] + " out of sequence" + where);

    Node nd;
    const auto kind = op_kind_from_name(toks[1]);
    if (!kind) throw FormatError("unknown op kind '" + toks[1] + "'" + where);
    nd.kind = *kind;

    if (toks[2] != "-") {
      std::size_t pos = 0;
      while (pos <= toks[2].size()) {
        const std::size_t next = toks[2].find(',', pos);
        const std::string part =
            toks[2].substr(pos, next == std::string::npos ? next : next - pos);
        try {
          nd.inputs.push_back(static_cast<NodeId>(std::stoul(part)));
        } catch (const std::exception&) {
          throw FormatError("bad input list '" + toks[2] + "'" + where);
        }
        if (next == std::string::npos) break;
        pos = next + 1;
      }
    }

    std::vector<std::size_t> shape;
    try {
      shape = detail::parse_shape_str(toks[3]);
    } catch (const FormatError& e) {
      throw FormatError(std::string(e.what()) + where);
    }

    if (toks[4] == "grad")
      nd.requires_grad = true;
    else if (toks[4] == "nograd")
      nd.requires_grad = false;
    else
      throw FormatError("expected grad|nograd, got '" + toks[4] + "'" + where);

    for (std::size_t k = 5; k < toks.size(); ++k) {
      const std::string& tok = toks[k];
      const std::size_t eq = tok.find('=');
      if (eq == std::string::npos) throw FormatError("expected key=value, got '" + tok + "'" + where);
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      try {
        if (key == "axis") {
          nd.aux = std::stoi(val);
        } else if (key == "shape") {
          std::vector<std::string> parts;
          std::size_t pos = 0;
          while (pos <= val.size()) {
            const std::size_t next = val.find(':', pos);
            parts.push_back(val.substr(pos, next == std::string::npos ? next : next - pos));
            if (next == std::string::npos) break;
            pos = next + 1;
          }
          if (parts[0] == "gaussian" && parts.size() == 3)
            nd.aux = SurrogateShape::gaussian(std::stod(parts[1]), std::stod(parts[2]));
          else if (parts[0] == "dblgaussian" && parts.size() == 4)
            nd.aux = SurrogateShape::double_gaussian(std::stod(parts[1]), std::stod(parts[2]),
                                                     std::stod(parts[3]));
          else if (parts[0] == "tanhderiv" && parts.size() == 1)
            nd.aux = SurrogateShape::tanh_deriv();
          else
            throw FormatError("bad shape field '" + val + "'");
        } else if (key == "labels") {
          std::vector<int> labels;
          std::size_t pos = 0;
          while (pos <= val.size()) {
            const std::size_t next = val.find(',', pos);
            labels.push_back(std::stoi(val.substr(pos, next == std::string::npos ? next : next - pos)));
            if (next == std::string::npos) break;
            pos = next + 1;
          }
          nd.aux = std::move(labels);
        } else if (key == "tag") {
          nd.tag = val;
        } else {
          throw FormatError("unknown field '" + key + "'");
        }
      } catch (const FormatError& e) {
        throw FormatError(std::string(e.what()) + where);
      } catch (const std::exception&) {
        throw FormatError("bad value in '" + tok + "'" + where);
      }
    }

    if (nd.kind == OpKind::Leaf) snap.leaf_values.emplace(snap.nodes.size(), Tensor<Real>::zeros(shape));
    snap.nodes.push_back(std::move(nd));
    snap.shapes.push_back(std::move(shape));
  }
  try {
    validate(snap);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("parsed snapshot is invalid: ") + e.what());
  }
  return snap;
}

/// Replays a frozen graph: assign leaf values and labels, run forward, then
/// backward, any number of times. Shares the evaluation and accumulation
/// routines with the eager tape, so replay is numerically identical to
/// re-recording the same graph.
template <class Real>
class Executor {
 public:
  explicit Executor(Snapshot<Real> snap) : snap_(std::move(snap)) {
    validate(snap_);
    values_.resize(snap_.nodes.size());
    for (auto& [id, v] : snap_.leaf_values) values_[id] = v;
    for (NodeId i = 0; i < snap_.nodes.size(); ++i)
      if (!snap_.nodes[i].tag.empty()) tags_.emplace(snap_.nodes[i].tag, i);
  }

  const Snapshot<Real>& snapshot() const { return snap_; }
  std::size_t size() const { return snap_.nodes.size(); }

  /// Node id carrying the given tag; UsageError when no node does.
  NodeId find_tag(const std::string& tag) const {
    auto it = tags_.find(tag);
    if (it == tags_.end()) throw UsageError("no node tagged '" + tag + "'");
    return it->second;
  }

  void set_leaf(NodeId id, Tensor<Real> v) {
    check_id(id);
    if (snap_.nodes[id].kind != OpKind::Leaf)
      throw UsageError("node " + std::to_string(id) + " is not a leaf");
    if (!(v.shape() == snap_.shapes[id]))
      throw ShapeError("leaf " + std::to_string(id) + " expects shape " +
                       detail::shape_str(snap_.shapes[id]));
    values_[id] = std::move(v);
  }

  void set_labels(NodeId id, std::vector<int> labels) {
    check_id(id);
    if (snap_.nodes[id].kind != OpKind::CrossEntropy)
      throw UsageError("node " + std::to_string(id) + " does not take labels");
    snap_.nodes[id].aux = std::move(labels);
  }

  void forward() {
    for (NodeId i = 0; i < snap_.nodes.size(); ++i)
      if (snap_.nodes[i].kind != OpKind::Leaf)
        values_[i] = detail::eval_node(snap_.nodes[i], values_);
  }

  const Tensor<Real>& value(NodeId id) const {
    check_id(id);
    return values_[id];
  }

  GradientMap<Real> backward(NodeId root) {
    check_id(root);
    const Tensor<Real>& rv = values_[root];
    if (rv.numel() != 1) throw UsageError("replay backward root must be scalar");
    std::vector<std::optional<Tensor<Real>>> grads(root + 1);
    grads[root] = Tensor<Real>::full(rv.shape(), Real(1));
    detail::backprop(snap_.nodes, values_, root, grads);
    GradientMap<Real> out;
    for (NodeId i = 0; i < snap_.nodes.size(); ++i) {
      if (snap_.nodes[i].kind == OpKind::Leaf && snap_.nodes[i].requires_grad) {
        if (i <= root && grads[i])
          out.insert(i, std::move(*grads[i]));
        else
          out.insert(i, Tensor<Real>::zeros(values_[i].shape()));
      }
    }
    return out;
  }

 private:
  void check_id(NodeId id) const {
    if (id >= snap_.nodes.size()) throw UsageError("node id " + std::to_string(id) + " out of range");
  }

  Snapshot<Real> snap_;
  std::vector<Tensor<Real>> values_;
  std::map<std::string, NodeId> tags_;
};

}  // namespace spikegrad
