// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spikegrad/snapshot.hpp"
#include "spikegrad/tape.hpp"

namespace spikegrad {

/// Outcome of one rewrite pass over a snapshot. Node counts never increase;
/// fused sites strictly shrink the graph.
struct RewriteReport {
  std::size_t inject_sites = 0;
  std::size_t bypass_sites = 0;
  std::size_t nodes_before = 0;
  std::size_t nodes_after = 0;

  std::size_t nodes_removed() const { return nodes_before - nodes_after; }

  std::string summary() const {
    return "fused " + std::to_string(inject_sites) + " inject site(s), " +
           std::to_string(bypass_sites) + " bypass site(s): " + std::to_string(nodes_before) +
           " -> " + std::to_string(nodes_after) + " nodes";
  }
};

namespace detail {

struct FgiMatch {
  NodeId y;  // add node, replaced in place
  NodeId x, d, f;
  NodeId dd, m, dm, s, df;  // interior, removed
};

struct BypassMatch {
  NodeId y;
  NodeId g, f;
  NodeId dg, s, df;  // interior, removed
};

inline std::vector<std::vector<NodeId>> consumer_lists(const std::vector<Node>& nodes) {
  std::vector<std::vector<NodeId>> out(nodes.size());
  for (NodeId i = 0; i < nodes.size(); ++i)
    for (NodeId in : nodes[i].inputs) out[in].push_back(i);
  return out;
}

inline bool consumers_are(const std::vector<std::vector<NodeId>>& cons, NodeId id,
                          std::initializer_list<NodeId> expected) {
  const auto& c = cons[id];
  if (c.size() != expected.size()) return false;
  for (NodeId e : expected) {
    bool found = false;
    for (NodeId got : c)
      if (got == e) found = true;
    if (!found) return false;
  }
  return true;
}

/// Interior nodes must be anonymous and consumed only inside the pattern;
/// a tag counts as an outside observer.
inline bool interior_ok(const std::vector<Node>& nodes, const std::vector<char>& claimed,
                        std::initializer_list<NodeId> interior) {
  for (NodeId id : interior)
    if (claimed[id] || !nodes[id].tag.empty()) return false;
  return true;
}

/// Drops the listed nodes and rewires the survivors, preserving index order.
/// `replace` maps a kept node id to the node that should take its slot.
template <class Real>
void rebuild(Snapshot<Real>& snap, const std::vector<char>& drop,
             const std::vector<std::optional<Node>>& replace) {
  const std::size_t n = snap.nodes.size();
  std::vector<NodeId> remap(n);
  std::vector<Node> nodes;
  std::vector<std::vector<std::size_t>> shapes;
  std::map<NodeId, Tensor<Real>> leaves;
  for (NodeId i = 0; i < n; ++i) {
    if (drop[i]) continue;
    remap[i] = static_cast<NodeId>(nodes.size());
    Node nd = replace[i] ? *replace[i] : snap.nodes[i];
    for (NodeId& in : nd.inputs) in = remap[in];
    nodes.push_back(std::move(nd));
    shapes.push_back(snap.shapes[i]);
    auto it = snap.leaf_values.find(i);
    if (it != snap.leaf_values.end()) leaves.emplace(remap[i], std::move(it->second));
  }
  snap.nodes = std::move(nodes);
  snap.shapes = std::move(shapes);
  snap.leaf_values = std::move(leaves);
}

}  // namespace detail

/// Rewrites every safe occurrence of the injection motif
///   dd = detach(d); m = mul(x, dd); dm = detach(m);
///   s = sub(m, dm); df = detach(f); y = add(s, df)
/// into the single node fused_inject(x, d, f). The motif's forward value is
/// f and its gradient into x is d's value, which is exactly what the fused
/// node computes, so values and gradients are preserved bit for bit.
template <class Real>
RewriteReport fuse_inject_sites(Snapshot<Real>& snap) {
  validate(snap);
  const auto& nodes = snap.nodes;
  const auto cons = detail::consumer_lists(nodes);
  std::vector<char> claimed(nodes.size(), 0);
  std::vector<detail::FgiMatch> matches;

  auto try_match = [&](NodeId y, NodeId s, NodeId df, detail::FgiMatch& out) -> bool {
    if (nodes[s].kind != OpKind::Sub || nodes[df].kind != OpKind::Detach) return false;
    const NodeId m = nodes[s].inputs[0], dm = nodes[s].inputs[1];
    if (nodes[dm].kind != OpKind::Detach || nodes[dm].inputs[0] != m) return false;
    if (nodes[m].kind != OpKind::Mul) return false;
    const NodeId f = nodes[df].inputs[0];
    // The mul's detached factor may sit on either side.
    for (int side = 0; side < 2; ++side) {
      const NodeId x = nodes[m].inputs[side];
      const NodeId dd = nodes[m].inputs[1 - side];
      if (nodes[dd].kind != OpKind::Detach) continue;
      const NodeId d = nodes[dd].inputs[0];
      if (!detail::interior_ok(nodes, claimed, {dd, m, dm, s, df})) continue;
      if (!detail::consumers_are(cons, dd, {m})) continue;
      if (!detail::consumers_are(cons, m, {dm, s})) continue;
      if (!detail::consumers_are(cons, dm, {s})) continue;
      if (!detail::consumers_are(cons, s, {y})) continue;
      if (!detail::consumers_are(cons, df, {y})) continue;
      out = {y, x, d, f, dd, m, dm, s, df};
      return true;
    }
    return false;
  };

  for (NodeId y = 0; y < nodes.size(); ++y) {
    if (nodes[y].kind != OpKind::Add || claimed[y]) continue;
    const NodeId a = nodes[y].inputs[0], b = nodes[y].inputs[1];
    detail::FgiMatch mt;
    if (try_match(y, a, b, mt) || try_match(y, b, a, mt)) {
      matches.push_back(mt);
      for (NodeId id : {mt.dd, mt.m, mt.dm, mt.s, mt.df, mt.y}) claimed[id] = 1;
    }
  }

  RewriteReport rep;
  rep.nodes_before = nodes.size();
  rep.inject_sites = matches.size();

  std::vector<char> drop(nodes.size(), 0);
  std::vector<std::optional<Node>> replace(nodes.size());
  for (const auto& mt : matches) {
    for (NodeId id : {mt.dd, mt.m, mt.dm, mt.s, mt.df}) drop[id] = 1;
    Node fused;
    fused.kind = OpKind::FusedInject;
    fused.inputs = {mt.x, mt.d, mt.f};
    fused.requires_grad = nodes[mt.x].requires_grad;
    fused.tag = nodes[mt.y].tag;
    replace[mt.y] = std::move(fused);
  }
  detail::rebuild(snap, drop, replace);
  rep.nodes_after = snap.nodes.size();
  validate(snap);
  return rep;
}

/// Rewrites every safe occurrence of the bypass motif
///   dg = detach(g); s = sub(g, dg); df = detach(f); y = add(s, df)
/// into fused_bypass(g, f). Requires that g has no consumers besides the
/// motif itself: another consumer means g's value is observed elsewhere, and
/// the site is left alone rather than guessed at.
template <class Real>
RewriteReport fuse_bypass_sites(Snapshot<Real>& snap) {
  validate(snap);
  const auto& nodes = snap.nodes;
  const auto cons = detail::consumer_lists(nodes);
  std::vector<char> claimed(nodes.size(), 0);
  std::vector<detail::BypassMatch> matches;

  auto try_match = [&](NodeId y, NodeId s, NodeId df, detail::BypassMatch& out) -> bool {
    if (nodes[s].kind != OpKind::Sub || nodes[df].kind != OpKind::Detach) return false;
    const NodeId g = nodes[s].inputs[0], dg = nodes[s].inputs[1];
    if (nodes[dg].kind != OpKind::Detach || nodes[dg].inputs[0] != g) return false;
    const NodeId f = nodes[df].inputs[0];
    if (!detail::interior_ok(nodes, claimed, {dg, s, df})) return false;
    if (!detail::consumers_are(cons, g, {dg, s})) return false;
    if (!detail::consumers_are(cons, dg, {s})) return false;
    if (!detail::consumers_are(cons, s, {y})) return false;
    if (!detail::consumers_are(cons, df, {y})) return false;
    out = {y, g, f, dg, s, df};
    return true;
  };

  for (NodeId y = 0; y < nodes.size(); ++y) {
    if (nodes[y].kind != OpKind::Add || claimed[y]) continue;
    const NodeId a = nodes[y].inputs[0], b = nodes[y].inputs[1];
    detail::BypassMatch mt;
    if (try_match(y, a, b, mt) || try_match(y, b, a, mt)) {
      matches.push_back(mt);
      for (NodeId id : {mt.dg, mt.s, mt.df, mt.y}) claimed[id] = 1;
    }
  }

  RewriteReport rep;
  rep.nodes_before = nodes.size();
  rep.bypass_sites = matches.size();

  std::vector<char> drop(nodes.size(), 0);
  std::vector<std::optional<Node>> replace(nodes.size());
  for (const auto& mt : matches) {
    for (NodeId id : {mt.dg, mt.s, mt.df}) drop[id] = 1;
    Node fused;
    fused.kind = OpKind::FusedBypass;
    fused.inputs = {mt.g, mt.f};
    fused.requires_grad = nodes[mt.g].requires_grad;
    fused.tag = nodes[mt.y].tag;
    replace[mt.y] = std::move(fused);
  }
  detail::rebuild(snap, drop, replace);
  rep.nodes_after = snap.nodes.size();
  validate(snap);
  return rep;
}

/// Full rewrite: injection sites first, then bypass sites. The order matters
/// because an injection site contains a bypass-shaped core; running bypass
/// first would claim those sites with a weaker rewrite.
template <class Real>
RewriteReport fuse_all(Snapshot<Real>& snap) {
  RewriteReport a = fuse_inject_sites(snap);
  RewriteReport b = fuse_bypass_sites(snap);
  RewriteReport rep;
  rep.inject_sites = a.inject_sites;
  rep.bypass_sites = b.bypass_sites;
  rep.nodes_before = a.nodes_before;
  rep.nodes_after = b.nodes_after;
  return rep;
}

}  // namespace spikegrad
