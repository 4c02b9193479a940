// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
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
#include "spikegrad/trainer.hpp"

namespace spikegrad {

/// Iterations summed into warmup_s and excluded from steady-state means.
inline constexpr std::size_t kWarmupIters = 3;

struct BenchRecord {
  std::string mechanism;
  std::string graph_mode;
  std::size_t seq_len = 0;
  std::size_t iter = 0;
  double fwd_ms = 0.0;
  double bwd_ms = 0.0;
};

struct CellKey {
  std::string mechanism;
  std::string graph_mode;
  std::size_t seq_len = 0;
  bool operator==(const CellKey&) const = default;
};

struct CellOutcome {
  CellKey key;
  bool ok = false;
  std::string error;
  std::size_t nodes_per_iter = 0;
  RewriteReport rewrite;  // populated for fused-mode cells
};

struct BenchResult {
  std::vector<BenchRecord> records;
  std::vector<CellOutcome> cells;

  bool all_ok() const {
    for (const auto& c : cells)
      if (!c.ok) return false;
    return true;
  }

  std::vector<CellKey> grid() const {
    std::vector<CellKey> g;
    for (const auto& c : cells) g.push_back(c.key);
    return g;
  }
};

struct SummaryRow {
  CellKey key;
  bool has_warmup = false;  // cell produced at least one record
  bool has_stats = false;   // cell produced at least one post-warmup record
  double fwd_mean_ms = 0.0;
  double fwd_sd_ms = 0.0;
  double bwd_mean_ms = 0.0;
  double bwd_sd_ms = 0.0;
  double warmup_s = 0.0;
  bool has_speedup = false;
  double speedup = 0.0;
};

namespace detail {

/// Snaps a measured time to the CSV's 3-decimal resolution, so summaries
/// computed in memory and re-derived from the records file agree bitwise.
inline double quantize_ms(double v) {
  return std::strtod(format_fixed(v, 3).c_str(), nullptr);
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_sd(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

/// Per-cell means and sds over post-warmup records, the warmup time sum, and
/// fused-over-dynamic speedups. Pure over the records; `grid` only adds rows
/// (as n.a.) for cells that produced no records. Empty grid means "derive the
/// cells from the records in order of first appearance".
inline std::vector<SummaryRow> summarize(const std::vector<BenchRecord>& records,
                                         std::vector<CellKey> grid = {},
                                         std::size_t warmup = kWarmupIters) {
  if (grid.empty()) {
    for (const auto& r : records) {
      CellKey k{r.mechanism, r.graph_mode, r.seq_len};
      if (std::find(grid.begin(), grid.end(), k) == grid.end()) grid.push_back(k);
    }
  }
  std::vector<SummaryRow> rows;
  for (const auto& k : grid) {
    SummaryRow row;
    row.key = k;
    std::vector<double> fwd, bwd;
    std::size_t seen = 0;
    for (const auto& r : records) {
      if (r.mechanism != k.mechanism || r.graph_mode != k.graph_mode || r.seq_len != k.seq_len)
        continue;
      if (seen < warmup) {
        row.warmup_s += (r.fwd_ms + r.bwd_ms) / 1000.0;
      } else {
        fwd.push_back(r.fwd_ms);
        bwd.push_back(r.bwd_ms);
      }
      ++seen;
    }
    row.has_warmup = seen > 0;
    if (!fwd.empty()) {
      row.has_stats = true;
      row.fwd_mean_ms = detail::mean_of(fwd);
      row.fwd_sd_ms = detail::sample_sd(fwd, row.fwd_mean_ms);
      row.bwd_mean_ms = detail::mean_of(bwd);
      row.bwd_sd_ms = detail::sample_sd(bwd, row.bwd_mean_ms);
    }
    rows.push_back(row);
  }
  for (auto& row : rows) {
    if (!row.has_stats) continue;
    if (row.key.graph_mode == graph_mode_name(GraphMode::Dynamic)) {
      row.has_speedup = true;
      row.speedup = 1.0;
      continue;
    }
    for (const auto& base : rows) {
      if (base.key.mechanism != row.key.mechanism || base.key.seq_len != row.key.seq_len)
        continue;
      if (base.key.graph_mode != graph_mode_name(GraphMode::Dynamic) || !base.has_stats) continue;
      const double mine = row.fwd_mean_ms + row.bwd_mean_ms;
      if (mine > 0.0) {
        row.has_speedup = true;
        row.speedup = (base.fwd_mean_ms + base.bwd_mean_ms) / mine;
      }
    }
  }
  return rows;
}

inline void write_records_csv(const std::string& path, const std::vector<BenchRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "mechanism,graph_mode,seq_len,iter,fwd_ms,bwd_ms\n";
  for (const auto& r : records) {
    f << r.mechanism << ',' << r.graph_mode << ',' << r.seq_len << ',' << r.iter << ','
      << format_fixed(r.fwd_ms, 3) << ',' << format_fixed(r.bwd_ms, 3) << '\n';
  }
  if (!f) throw IoError("short write to '" + path + "'");
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::size_t parse_size(const std::string& s, int line_no, const char* what) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw FormatError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  return static_cast<std::size_t>(std::strtoull(s.c_str(), nullptr, 10));
}

inline double parse_ms(const std::string& s, int line_no, const char* what) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw FormatError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  return v;
}

}  // namespace detail

inline std::vector<BenchRecord> parse_records_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw FormatError("'" + path + "' is empty");
  if (line == "mechanism,graph_mode,seq_len,iter,fwd_ms,bwd_ms\r")
    line.pop_back();
  if (line != "mechanism,graph_mode,seq_len,iter,fwd_ms,bwd_ms")
    throw FormatError("'" + path + "' line 1: unexpected header '" + line + "'");
  std::vector<BenchRecord> out;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 6)
      throw FormatError("line " + std::to_string(line_no) + ": expected 6 fields, got " +
                        std::to_string(fields.size()));
    BenchRecord r;
    r.mechanism = fields[0];
    r.graph_mode = fields[1];
    r.seq_len = detail::parse_size(fields[2], line_no, "seq_len");
    r.iter = detail::parse_size(fields[3], line_no, "iter");
    r.fwd_ms = detail::parse_ms(fields[4], line_no, "fwd_ms");
    r.bwd_ms = detail::parse_ms(fields[5], line_no, "bwd_ms");
    out.push_back(r);
  }
  return out;
}

inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "mechanism,graph_mode,seq_len,fwd_mean_ms,fwd_sd_ms,bwd_mean_ms,bwd_sd_ms,warmup_s,"
       "speedup\n";
  for (const auto& r : rows) {
    f << r.key.mechanism << ',' << r.key.graph_mode << ',' << r.key.seq_len << ',';
    if (r.has_stats) {
      f << format_fixed(r.fwd_mean_ms, 3) << ',' << format_fixed(r.fwd_sd_ms, 3) << ','
        << format_fixed(r.bwd_mean_ms, 3) << ',' << format_fixed(r.bwd_sd_ms, 3) << ',';
    } else {
      f << "n.a.,n.a.,n.a.,n.a.,";
    }
    f << (r.has_warmup ? format_fixed(r.warmup_s, 6) : "n.a.") << ','
      << (r.has_speedup ? format_fixed(r.speedup, 3) : "n.a.") << '\n';
  }
  if (!f) throw IoError("short write to '" + path + "'");
}

/// One whitespace-separated panel: x = seq_len, one column per mechanism:mode
/// series, mean fwd or bwd time in ms, n.a. where a cell is missing.
inline void write_plot_data(const std::string& path, const std::vector<SummaryRow>& rows,
                            bool forward) {
  std::vector<std::pair<std::string, std::string>> series;
  std::vector<std::size_t> xs;
  for (const auto& r : rows) {
    std::pair<std::string, std::string> s{r.key.mechanism, r.key.graph_mode};
    if (std::find(series.begin(), series.end(), s) == series.end()) series.push_back(s);
    if (std::find(xs.begin(), xs.end(), r.key.seq_len) == xs.end()) xs.push_back(r.key.seq_len);
  }
  std::sort(xs.begin(), xs.end());

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "# seq_len";
  for (const auto& s : series) f << ' ' << s.first << ':' << s.second;
  f << '\n';
  for (std::size_t x : xs) {
    f << x;
    for (const auto& s : series) {
      const SummaryRow* hit = nullptr;
      for (const auto& r : rows)
        if (r.key.mechanism == s.first && r.key.graph_mode == s.second && r.key.seq_len == x)
          hit = &r;
      if (hit && hit->has_stats)
        f << ' ' << format_fixed(forward ? hit->fwd_mean_ms : hit->bwd_mean_ms, 3);
      else
        f << " n.a.";
    }
    f << '\n';
  }
  if (!f) throw IoError("short write to '" + path + "'");
}

struct BenchConfig {
  NetworkConfig net;
  std::vector<Mechanism> mechanisms = {Mechanism::CustomBackward, Mechanism::Bypass,
                                       Mechanism::Inject, Mechanism::Fused};
  std::vector<GraphMode> modes = {GraphMode::Dynamic, GraphMode::Fused};
  std::vector<std::size_t> seq_lens = {28, 784};
  std::size_t iters = 20;
  std::size_t repeats = 1;
  std::size_t batch = 16;
  std::uint64_t data_seed = 1;
  double check_tol = 1e-10;
};

namespace detail {

template <class Real>
std::array<Tensor<Real>, 4> dynamic_batch_grads(const NetworkWeights<Real>& w, const Batch& b,
                                                const NetworkConfig& net) {
  IterationGraph<Real> g;
  build_iteration(g, w, b, net);
  GradientMap<Real> grads = g.tape.backward(g.loss);
  return {grads.at(g.w.w_in), grads.at(g.w.w_rec), grads.at(g.w.w_out), grads.at(g.w.b_out)};
}

template <class Real>
void check_grads_close(const std::array<Tensor<Real>, 4>& got,
                       const std::array<Tensor<Real>, 4>& want, double tol) {
  static const char* names[4] = {"w_in", "w_rec", "w_out", "b_out"};
  for (int k = 0; k < 4; ++k) {
    for (std::size_t i = 0; i < want[k].numel(); ++i) {
      const double a = static_cast<double>(got[k][i]);
      const double b = static_cast<double>(want[k][i]);
      const double bound = tol * std::max(1.0, std::fabs(b));
      if (!(std::fabs(a - b) <= bound))
        throw ConsistencyError("gradient mismatch in " + std::string(names[k]) + "[" +
                               std::to_string(i) + "]: got " + format_g17(a) + ", reference " +
                               format_g17(b));
    }
  }
}

template <class Real>
void run_cell(const BenchConfig& cfg, const Dataset& ds, const NetworkConfig& net_cell,
              const NetworkWeights<Real>& weights, GraphMode mode, const CellKey& key,
              std::vector<BenchRecord>& out, CellOutcome& cell) {
  const std::size_t seq_len = key.seq_len;
  Batcher batcher(ds.count, cfg.batch, cfg.data_seed);
  const Batch b0 = make_batch(ds, batcher.next(), seq_len);

  // Correctness gate, untimed: the cell's gradients on its first batch must
  // match a dynamically built custom-backward graph with the same shape.
  NetworkConfig ref_net = net_cell;
  ref_net.mech = Mechanism::CustomBackward;
  const auto want = dynamic_batch_grads(weights, b0, ref_net);
  if (mode == GraphMode::Dynamic) {
    check_grads_close(dynamic_batch_grads(weights, b0, net_cell), want, cfg.check_tol);
  } else {
    auto probe = ReplayCell<Real>::build(weights, b0, net_cell, nullptr);
    check_grads_close(probe.grads(), want, cfg.check_tol);
  }

  const std::size_t total = cfg.iters * cfg.repeats;
  using clock = std::chrono::steady_clock;
  if (mode == GraphMode::Dynamic) {
    for (std::size_t it = 0; it < total; ++it) {
      const Batch b = make_batch(ds, batcher.next(), seq_len);
      const auto t0 = clock::now();
      IterationGraph<Real> g;
      build_iteration(g, weights, b, net_cell);
      const auto t1 = clock::now();
      (void)g.tape.backward(g.loss);
      const auto t2 = clock::now();
      out.push_back({key.mechanism, key.graph_mode, seq_len, it, quantize_ms(ms_between(t0, t1)),
                     quantize_ms(ms_between(t1, t2))});
      cell.nodes_per_iter = g.tape.size();
    }
  } else {
    // Iteration 0 carries the one-time cost: graph build, rewrite, executor.
    const Batch b1 = make_batch(ds, batcher.next(), seq_len);
    const auto t0 = clock::now();
    auto replay = ReplayCell<Real>::build(weights, b1, net_cell, &cell.rewrite);
    replay.ex.forward();
    const auto t1 = clock::now();
    (void)replay.ex.backward(replay.loss_id);
    const auto t2 = clock::now();
    out.push_back({key.mechanism, key.graph_mode, seq_len, 0, quantize_ms(ms_between(t0, t1)),
                   quantize_ms(ms_between(t1, t2))});
    for (std::size_t it = 1; it < total; ++it) {
      const Batch b = make_batch(ds, batcher.next(), seq_len);
      const auto s0 = clock::now();
      replay.feed(b);
      replay.ex.forward();
      const auto s1 = clock::now();
      (void)replay.ex.backward(replay.loss_id);
      const auto s2 = clock::now();
      out.push_back({key.mechanism, key.graph_mode, seq_len, it, quantize_ms(ms_between(s0, s1)),
                     quantize_ms(ms_between(s1, s2))});
    }
    cell.nodes_per_iter = replay.ex.size();
  }
}

}  // namespace detail

/// Times every (mechanism, graph mode, sequence length) cell on the given
/// dataset. Bypass cells run with the tanh-derivative shape (the only one
/// with a closed antiderivative); all other cells use cfg.net.shape. Cells
/// share the batch stream and per-length weights, so numbers are comparable
/// across a row. A cell whose gradients disagree with the dynamically built
/// custom-backward reference is skipped and reported as failed.
template <class Real = double>
BenchResult run_bench(const BenchConfig& cfg, const Dataset& ds, std::ostream* log = nullptr) {
  if (cfg.iters * cfg.repeats < kWarmupIters + 1)
    throw ValueError("need at least " + std::to_string(kWarmupIters + 1) +
                     " iterations per cell, got " + std::to_string(cfg.iters * cfg.repeats));
  if (cfg.mechanisms.empty() || cfg.modes.empty() || cfg.seq_lens.empty())
    throw ValueError("benchmark grid is empty");
  for (std::size_t t : cfg.seq_lens) check_seq_len(t, ds.pixels);
  if (ds.classes > cfg.net.classes)
    throw ConsistencyError("dataset has " + std::to_string(ds.classes) +
                           " classes but the network has " + std::to_string(cfg.net.classes));

  BenchResult result;
  for (std::size_t seq_len : cfg.seq_lens) {
    NetworkConfig net = cfg.net;
    net.inputs = ds.pixels / seq_len;
    const NetworkWeights<Real> weights = init_weights<Real>(net);
    for (Mechanism mech : cfg.mechanisms) {
      NetworkConfig net_cell = net;
      net_cell.mech = mech;
      if (mech == Mechanism::Bypass) net_cell.shape = SurrogateShape::tanh_deriv();
      for (GraphMode mode : cfg.modes) {
        CellOutcome cell;
        cell.key = {mechanism_name(mech), graph_mode_name(mode), seq_len};
        try {
          detail::run_cell(cfg, ds, net_cell, weights, mode, cell.key, result.records, cell);
          cell.ok = true;
        } catch (const Error& e) {
          cell.ok = false;
          cell.error = e.what();
        }
        if (log) {
          (*log) << "cell " << cell.key.mechanism << '/' << cell.key.graph_mode
                 << " T=" << seq_len;
          if (cell.ok)
            (*log) << " ok, " << cell.nodes_per_iter << " nodes/iter\n";
          else
            (*log) << " FAILED: " << cell.error << '\n';
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }
  return result;
}

}  // namespace spikegrad
