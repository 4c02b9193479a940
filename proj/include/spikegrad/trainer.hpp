// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spikegrad/alif.hpp"
#include "spikegrad/data.hpp"
#include "spikegrad/errors.hpp"
#include "spikegrad/format.hpp"
#include "spikegrad/graph_opt.hpp"
#include "spikegrad/snapshot.hpp"
#include "spikegrad/surrogate.hpp"
#include "spikegrad/tape.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  NetworkConfig net;
  std::size_t seq_len = 28;
  std::size_t batch = 16;
  std::size_t iters = 100;
  double lr = 0.001;
  Optimizer opt = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t data_seed = 1;
  GraphMode mode = GraphMode::Dynamic;
  std::size_t log_every = 10;  // 0 disables progress lines
};

struct MetricsRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double acc = 0.0;
  double fwd_ms = 0.0;
  double bwd_ms = 0.0;
};

/// iter,loss,acc,fwd_ms,bwd_ms with fixed decimal places.
inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "iter,loss,acc,fwd_ms,bwd_ms\n";
  for (const auto& r : rows) {
    f << r.iter << ',' << format_fixed(r.loss, 6) << ',' << format_fixed(r.acc, 4) << ','
      << format_fixed(r.fwd_ms, 3) << ',' << format_fixed(r.bwd_ms, 3) << '\n';
  }
  if (!f) throw IoError("short write to '" + path + "'");
}

namespace detail {

template <class Real>
std::array<Tensor<Real>*, 4> weight_list(NetworkWeights<Real>& w) {
  return {&w.w_in, &w.w_rec, &w.w_out, &w.b_out};
}

/// Row argmax; ties resolve to the lowest index.
template <class Real>
int argmax_row(const Tensor<Real>& t, std::size_t row) {
  int best = 0;
  Real best_v = t.at2(row, 0);
  for (std::size_t j = 1; j < t.extent(1); ++j) {
    if (t.at2(row, j) > best_v) {
      best_v = t.at2(row, j);
      best = static_cast<int>(j);
    }
  }
  return best;
}

template <class Real>
double batch_accuracy(const Tensor<Real>& logits, const std::vector<int>& labels) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r)
    if (argmax_row(logits, r) == labels[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline double ms_between(std::chrono::steady_clock::time_point a,
                         std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace detail

/// First-order moment state for Adam, one slot per weight tensor.
template <class Real>
struct AdamState {
  std::array<Tensor<Real>, 4> m;
  std::array<Tensor<Real>, 4> v;
  std::size_t step = 0;

  static AdamState init(NetworkWeights<Real>& w) {
    AdamState s;
    auto ws = detail::weight_list(w);
    for (int k = 0; k < 4; ++k) {
      s.m[k] = Tensor<Real>::zeros(ws[k]->shape());
      s.v[k] = Tensor<Real>::zeros(ws[k]->shape());
    }
    return s;
  }
};

template <class Real>
void sgd_step(NetworkWeights<Real>& w, const std::array<const Tensor<Real>*, 4>& grads,
              double lr) {
  auto ws = detail::weight_list(w);
  for (int k = 0; k < 4; ++k) {
    Tensor<Real>& t = *ws[k];
    const Tensor<Real>& g = *grads[k];
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] -= Real(lr) * g[i];
  }
}

/// Bias-corrected Adam update.
template <class Real>
void adam_step(NetworkWeights<Real>& w, const std::array<const Tensor<Real>*, 4>& grads,
               AdamState<Real>& st, double lr, double beta1, double beta2, double eps) {
  st.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
  auto ws = detail::weight_list(w);
  for (int k = 0; k < 4; ++k) {
    Tensor<Real>& t = *ws[k];
    const Tensor<Real>& g = *grads[k];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      st.m[k][i] = Real(beta1) * st.m[k][i] + Real(1.0 - beta1) * g[i];
      st.v[k][i] = Real(beta2) * st.v[k][i] + Real(1.0 - beta2) * g[i] * g[i];
      const double mh = static_cast<double>(st.m[k][i]) / bc1;
      const double vh = static_cast<double>(st.v[k][i]) / bc2;
      t[i] -= Real(lr * mh / (std::sqrt(vh) + eps));
    }
  }
}

/// One training step's graph. The tape lives here so the vars stay valid;
/// the struct must stay put once built.
template <class Real>
struct IterationGraph {
  Tape<Real> tape;
  WeightVars<Real> w;
  std::vector<Var<Real>> xs;
  Var<Real> logits;
  Var<Real> loss;
};

/// Records forward graph and loss for one batch. Input leaves are tagged
/// x_0 .. x_{T-1} so a frozen copy of this graph can be re-fed later.
template <class Real>
void build_iteration(IterationGraph<Real>& g, const NetworkWeights<Real>& weights,
                     const Batch& batch, const NetworkConfig& net) {
  auto& t = g.tape;
  g.w = make_weight_vars(t, weights);
  g.xs.clear();
  for (std::size_t s = 0; s < batch.steps.size(); ++s) {
    auto x = t.leaf(tensor_cast<Real>(batch.steps[s]), false);
    t.set_tag(x, "x_" + std::to_string(s));
    g.xs.push_back(x);
  }
  auto seq = forward_sequence(t, g.w, g.xs, net);
  g.logits = seq.logits;
  g.loss = t.cross_entropy(g.logits, batch.labels);
  t.set_tag(g.loss, "loss");
}

namespace detail {

/// Frozen fused replay of one training-step graph. Leaf ids are resolved once.
template <class Real>
struct ReplayCell {
  Executor<Real> ex;
  std::vector<NodeId> x_ids;
  NodeId loss_id;
  NodeId logits_id;
  std::array<NodeId, 4> w_ids;

  static ReplayCell build(const NetworkWeights<Real>& w, const Batch& b,
                          const NetworkConfig& net, RewriteReport* report) {
    IterationGraph<Real> g;
    build_iteration(g, w, b, net);
    Snapshot<Real> snap = take_snapshot(g.tape);
    RewriteReport r = fuse_all(snap);
    if (report) *report = r;
    ReplayCell cell{Executor<Real>(std::move(snap)), {}, 0, 0, {}};
    for (std::size_t s = 0; s < b.steps.size(); ++s)
      cell.x_ids.push_back(cell.ex.find_tag("x_" + std::to_string(s)));
    cell.loss_id = cell.ex.find_tag("loss");
    cell.logits_id = cell.ex.find_tag("logits");
    cell.w_ids = {cell.ex.find_tag("w_in"), cell.ex.find_tag("w_rec"), cell.ex.find_tag("w_out"),
                  cell.ex.find_tag("b_out")};
    return cell;
  }

  void feed(const Batch& b) {
    for (std::size_t s = 0; s < b.steps.size(); ++s)
      ex.set_leaf(x_ids[s], tensor_cast<Real>(b.steps[s]));
    ex.set_labels(loss_id, b.labels);
  }

  void set_weights(const NetworkWeights<Real>& w) {
    ex.set_leaf(w_ids[0], w.w_in);
    ex.set_leaf(w_ids[1], w.w_rec);
    ex.set_leaf(w_ids[2], w.w_out);
    ex.set_leaf(w_ids[3], w.b_out);
  }

  std::array<Tensor<Real>, 4> grads() {
    ex.forward();
    GradientMap<Real> g = ex.backward(loss_id);
    return {g.at(w_ids[0]), g.at(w_ids[1]), g.at(w_ids[2]), g.at(w_ids[3])};
  }
};

}  // namespace detail

/// Trains for cfg.iters steps and returns the final weights. The input width
/// is taken from the data: pixels / seq_len. Metrics rows are appended per
/// iteration; `log` (when given) gets a short line every log_every steps.
/// Fused mode freezes the first iteration's graph, rewrites it, and replays
/// it with fresh inputs and weights; the numbers match dynamic mode exactly
/// because replay shares the evaluation code with the tape.
template <class Real>
NetworkWeights<Real> train(const TrainConfig& cfg, const Dataset& ds,
                           std::vector<MetricsRow>* metrics = nullptr,
                           std::ostream* log = nullptr,
                           const NetworkWeights<Real>* start = nullptr) {
  check_seq_len(cfg.seq_len, ds.pixels);
  if (ds.count == 0) throw UsageError("empty dataset");
  if (ds.classes > cfg.net.classes)
    throw ConsistencyError("dataset has " + std::to_string(ds.classes) +
                           " classes but the network has " + std::to_string(cfg.net.classes));

  NetworkConfig net = cfg.net;
  net.inputs = ds.pixels / cfg.seq_len;

  NetworkWeights<Real> weights = start ? *start : init_weights<Real>(net);
  AdamState<Real> adam = AdamState<Real>::init(weights);
  Batcher batcher(ds.count, cfg.batch, cfg.data_seed);
  std::optional<detail::ReplayCell<Real>> replay;

  for (std::size_t iter = 0; iter < cfg.iters; ++iter) {
    const Batch batch = make_batch(ds, batcher.next(), cfg.seq_len);
    using clock = std::chrono::steady_clock;

    MetricsRow row;
    row.iter = iter;
    std::array<Tensor<Real>, 4> grads;

    if (cfg.mode == GraphMode::Dynamic) {
      const auto t0 = clock::now();
      IterationGraph<Real> g;
      build_iteration(g, weights, batch, net);
      const auto t1 = clock::now();
      GradientMap<Real> gm = g.tape.backward(g.loss);
      const auto t2 = clock::now();
      row.loss = static_cast<double>(g.loss.value()[0]);
      row.acc = detail::batch_accuracy(g.logits.value(), batch.labels);
      row.fwd_ms = detail::ms_between(t0, t1);
      row.bwd_ms = detail::ms_between(t1, t2);
      grads = {gm.at(g.w.w_in), gm.at(g.w.w_rec), gm.at(g.w.w_out), gm.at(g.w.b_out)};
    } else {
      // First iteration pays for build, rewrite, and executor setup.
      const auto t0 = clock::now();
      if (!replay) {
        RewriteReport report;
        replay = detail::ReplayCell<Real>::build(weights, batch, net, &report);
        if (log) (*log) << report.summary() << '\n';
      } else {
        replay->set_weights(weights);
        replay->feed(batch);
      }
      replay->ex.forward();
      const auto t1 = clock::now();
      GradientMap<Real> gm = replay->ex.backward(replay->loss_id);
      const auto t2 = clock::now();
      row.loss = static_cast<double>(replay->ex.value(replay->loss_id)[0]);
      row.acc = detail::batch_accuracy(replay->ex.value(replay->logits_id), batch.labels);
      row.fwd_ms = detail::ms_between(t0, t1);
      row.bwd_ms = detail::ms_between(t1, t2);
      grads = {gm.at(replay->w_ids[0]), gm.at(replay->w_ids[1]), gm.at(replay->w_ids[2]),
               gm.at(replay->w_ids[3])};
    }

    if (metrics) metrics->push_back(row);
    if (log && cfg.log_every && (iter % cfg.log_every == 0 || iter + 1 == cfg.iters)) {
      (*log) << "iter " << iter << " loss " << format_fixed(row.loss, 4) << " acc "
             << format_fixed(row.acc, 3) << " fwd " << format_fixed(row.fwd_ms, 3) << "ms bwd "
             << format_fixed(row.bwd_ms, 3) << "ms\n";
    }

    const std::array<const Tensor<Real>*, 4> gp = {&grads[0], &grads[1], &grads[2], &grads[3]};
    if (cfg.opt == Optimizer::Sgd)
      sgd_step(weights, gp, cfg.lr);
    else
      adam_step(weights, gp, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  }
  return weights;
}

/// Accuracy of the network over the first `limit` dataset rows (all rows when
/// limit is 0), evaluated in batches.
template <class Real>
double evaluate(const NetworkWeights<Real>& weights, const NetworkConfig& net_in,
                std::size_t seq_len, const Dataset& ds, std::size_t limit = 0,
                std::size_t batch = 64) {
  check_seq_len(seq_len, ds.pixels);
  const std::size_t n = limit == 0 ? ds.count : (limit < ds.count ? limit : ds.count);
  if (n == 0) throw UsageError("nothing to evaluate");
  NetworkConfig net = net_in;
  net.inputs = ds.pixels / seq_len;
  std::size_t hits = 0;
  for (std::size_t start = 0; start < n; start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < n && i < start + batch; ++i) idx.push_back(i);
    const Batch b = make_batch(ds, idx, seq_len);
    Tape<Real> t;
    auto wv = make_weight_vars(t, weights);
    std::vector<Var<Real>> xs;
    for (const auto& s : b.steps) xs.push_back(t.leaf(tensor_cast<Real>(s), false));
    auto seq = forward_sequence(t, wv, xs, net);
    for (std::size_t r = 0; r < idx.size(); ++r)
      if (detail::argmax_row(seq.logits.value(), r) == b.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace spikegrad
