// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikegrad/spikegrad.hpp"

namespace sg = spikegrad;
namespace fs = std::filesystem;

namespace {

sg::Mechanism parse_mechanism(const std::string& name) {
  auto m = sg::mechanism_from_name(name);
  if (!m)
    throw sg::ValueError("unknown mechanism '" + name +
                         "', expected custom, bypass, inject, or fused");
  return *m;
}

sg::Readout readout_from_name(const std::string& name) {
  if (name == "membrane") return sg::Readout::Membrane;
  if (name == "spikes") return sg::Readout::Spikes;
  throw sg::ValueError("unknown readout '" + name + "', expected membrane or spikes");
}

sg::Optimizer optimizer_from_name(const std::string& name) {
  if (name == "adam") return sg::Optimizer::Adam;
  if (name == "sgd") return sg::Optimizer::Sgd;
  throw sg::ValueError("unknown optimizer '" + name + "', expected adam or sgd");
}

std::string ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw sg::IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

/// Training data: IDX pair under --data-dir, else the synthetic block task.
sg::Dataset load_train_data(const std::string& data_dir, std::size_t classes, std::size_t count,
                            std::uint64_t seed) {
  if (data_dir.empty()) return sg::synthetic_dataset(classes, count, seed);
  return sg::load_idx(join_path(data_dir, "train-images-idx3-ubyte"),
                      join_path(data_dir, "train-labels-idx1-ubyte"));
}

std::optional<sg::Dataset> load_eval_data(const std::string& data_dir) {
  if (data_dir.empty()) return std::nullopt;
  const std::string img = join_path(data_dir, "t10k-images-idx3-ubyte");
  const std::string lbl = join_path(data_dir, "t10k-labels-idx1-ubyte");
  if (!fs::exists(img) || !fs::exists(lbl)) return std::nullopt;
  return sg::load_idx(img, lbl);
}

struct TrainOpts {
  std::size_t seq_len = 28;
  std::string mechanism = "custom";
  std::string shape = "dblgaussian";
  std::string readout = "membrane";
  std::string optimizer = "adam";
  std::string graph_mode = "dynamic";
  std::string precision = "f64";
  std::size_t iters = 100;
  std::size_t batch = 16;
  std::size_t hidden = 64;
  std::size_t classes = 2;
  std::size_t count = 256;
  std::size_t log_every = 10;
  std::size_t eval_limit = 0;
  double lr = 0.001;
  std::uint64_t seed = 1;
  std::string data_dir;
  std::string out_dir = "out";
  std::string load_path;
  bool dump_graph = false;
};

template <class Real>
int run_train(const TrainOpts& o) {
  sg::TrainConfig cfg;
  cfg.net.hidden = o.hidden;
  cfg.net.shape = sg::shape_from_name(o.shape);
  cfg.net.mech = parse_mechanism(o.mechanism);
  cfg.net.readout = readout_from_name(o.readout);
  cfg.net.seed = o.seed;
  cfg.seq_len = o.seq_len;
  cfg.batch = o.batch;
  cfg.iters = o.iters;
  cfg.lr = o.lr;
  cfg.opt = optimizer_from_name(o.optimizer);
  cfg.data_seed = o.seed;
  cfg.mode = sg::graph_mode_from_name(o.graph_mode);
  cfg.log_every = o.log_every;

  sg::Dataset ds = load_train_data(o.data_dir, o.classes, o.count, o.seed);
  cfg.net.classes = ds.classes;
  std::cout << "data: " << ds.count << " sequences, " << ds.pixels << " pixels, " << ds.classes
            << " classes; T=" << o.seq_len << " (" << ds.pixels / o.seq_len
            << " inputs per step)\n";

  std::optional<sg::NetworkWeights<Real>> start;
  if (!o.load_path.empty()) {
    start = sg::load_weights<Real>(o.load_path);
    std::cout << "resuming from " << o.load_path << '\n';
  }

  std::vector<sg::MetricsRow> metrics;
  sg::NetworkWeights<Real> weights =
      sg::train<Real>(cfg, ds, &metrics, &std::cout, start ? &*start : nullptr);

  ensure_out_dir(o.out_dir);
  const std::string metrics_path = join_path(o.out_dir, "metrics.csv");
  const std::string weights_path = join_path(o.out_dir, "weights.bin");
  sg::write_metrics_csv(metrics_path, metrics);
  sg::save_weights(weights_path, weights);
  std::cout << "wrote " << metrics_path << " and " << weights_path << '\n';

  if (o.dump_graph) {
    sg::NetworkConfig net = cfg.net;
    net.inputs = ds.pixels / o.seq_len;
    sg::Batcher batcher(ds.count, o.batch, o.seed);
    const sg::Batch first = sg::make_batch(ds, batcher.next(), o.seq_len);
    sg::IterationGraph<Real> g;
    sg::build_iteration(g, weights, first, net);
    sg::Snapshot<Real> snap = sg::take_snapshot(g.tape);
    if (cfg.mode == sg::GraphMode::Fused) {
      auto report = sg::fuse_all(snap);
      std::cout << report.summary() << '\n';
    }
    const std::string graph_path = join_path(o.out_dir, "graph.txt");
    std::ofstream f(graph_path, std::ios::trunc);
    if (!f) throw sg::IoError("cannot open '" + graph_path + "' for writing");
    f << sg::dump_snapshot(snap);
    std::cout << "wrote " << graph_path << " (" << snap.nodes.size() << " nodes)\n";
  }

  std::optional<sg::Dataset> eval_ds = load_eval_data(o.data_dir);
  const sg::Dataset& target = eval_ds ? *eval_ds : ds;
  const double acc = sg::evaluate(weights, cfg.net, o.seq_len, target, o.eval_limit);
  std::cout << (eval_ds ? "test" : "train-set") << " accuracy " << sg::format_fixed(acc, 4)
            << '\n';
  return 0;
}

struct BenchOpts {
  std::vector<std::string> mechanisms = {"custom", "bypass", "inject", "fused"};
  std::vector<std::string> graph_modes = {"dynamic", "fused"};
  std::vector<std::size_t> seq_lens = {28, 784};
  std::string shape = "dblgaussian";
  std::string precision = "f64";
  std::size_t iters = 20;
  std::size_t repeats = 1;
  std::size_t batch = 16;
  std::size_t hidden = 64;
  std::size_t classes = 2;
  std::size_t count = 256;
  double check_tol = 1e-10;
  std::uint64_t seed = 1;
  std::string data_dir;
  std::string out_dir = "out";
};

void print_summary_table(const std::vector<sg::SummaryRow>& rows) {
  std::cout << std::left << std::setw(10) << "mechanism" << std::setw(9) << "mode" << std::right
            << std::setw(5) << "T" << std::setw(16) << "fwd_ms (sd)" << std::setw(16)
            << "bwd_ms (sd)" << std::setw(11) << "warmup_s" << std::setw(9) << "speedup" << '\n';
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(10) << r.key.mechanism << std::setw(9) << r.key.graph_mode
              << std::right << std::setw(5) << r.key.seq_len;
    if (r.has_stats) {
      std::cout << std::setw(16)
                << sg::format_fixed(r.fwd_mean_ms, 3) + " (" + sg::format_fixed(r.fwd_sd_ms, 3) +
                       ")"
                << std::setw(16)
                << sg::format_fixed(r.bwd_mean_ms, 3) + " (" + sg::format_fixed(r.bwd_sd_ms, 3) +
                       ")";
    } else {
      std::cout << std::setw(16) << "n.a." << std::setw(16) << "n.a.";
    }
    std::cout << std::setw(11) << (r.has_warmup ? sg::format_fixed(r.warmup_s, 6) : "n.a.")
              << std::setw(9) << (r.has_speedup ? sg::format_fixed(r.speedup, 3) : "n.a.") << '\n';
  }
}

template <class Real>
int run_bench_cmd(const BenchOpts& o) {
  sg::BenchConfig cfg;
  cfg.net.hidden = o.hidden;
  cfg.net.shape = sg::shape_from_name(o.shape);
  cfg.net.seed = o.seed;
  cfg.mechanisms.clear();
  for (const auto& m : o.mechanisms) cfg.mechanisms.push_back(parse_mechanism(m));
  cfg.modes.clear();
  for (const auto& m : o.graph_modes) cfg.modes.push_back(sg::graph_mode_from_name(m));
  cfg.seq_lens = o.seq_lens;
  cfg.iters = o.iters;
  cfg.repeats = o.repeats;
  cfg.batch = o.batch;
  cfg.data_seed = o.seed;
  cfg.check_tol = o.check_tol;

  sg::Dataset ds = load_train_data(o.data_dir, o.classes, o.count, o.seed);
  cfg.net.classes = ds.classes;

  sg::BenchResult result = sg::run_bench<Real>(cfg, ds, &std::cout);
  auto rows = sg::summarize(result.records, result.grid());

  ensure_out_dir(o.out_dir);
  const std::string records_path = join_path(o.out_dir, "bench_records.csv");
  const std::string summary_path = join_path(o.out_dir, "bench_summary.csv");
  sg::write_records_csv(records_path, result.records);
  sg::write_summary_csv(summary_path, rows);
  sg::write_plot_data(join_path(o.out_dir, "plot_fwd.dat"), rows, true);
  sg::write_plot_data(join_path(o.out_dir, "plot_bwd.dat"), rows, false);
  std::cout << "wrote " << records_path << ", " << summary_path << ", plot_fwd.dat, plot_bwd.dat\n";

  print_summary_table(rows);
  if (!result.all_ok()) {
    for (const auto& c : result.cells)
      if (!c.ok)
        std::cerr << "cell " << c.key.mechanism << '/' << c.key.graph_mode
                  << " T=" << c.key.seq_len << " failed: " << c.error << '\n';
    return 1;
  }
  return 0;
}

struct GradcheckOpts {
  std::uint64_t seed = 1;
  double h = 1e-5;
  double tol = 1e-6;
};

struct CheckItem {
  std::string name;
  double err;
  double tol;
};

/// Pointwise mechanism gradient over a grid, read off a single tape.
sg::Tensor<double> grid_mechanism_grad(const sg::Tensor<double>& grid, sg::SurrogateShape shape,
                                       sg::Mechanism mech) {
  sg::Tape<double> t;
  auto x = t.leaf(grid, true);
  auto y = sg::spike(t, x, shape, mech);
  auto grads = t.backward(t.sum(y));
  return grads.at(x);
}

int run_gradcheck(const GradcheckOpts& o) {
  std::vector<CheckItem> items;
  sg::Rng rng(o.seed);

  {
    std::vector<double> v(8);
    for (auto& e : v) e = rng.uniform(-1.5, 1.5);
    sg::Tensor<double> x = sg::Tensor<double>::vector(v);
    auto f = [](sg::Tape<double>& t, sg::Var<double> in) {
      auto a = t.tanh(t.mul(in, t.constant(0.7)));
      auto b = t.exp(t.mul(a, t.constant(0.5)));
      auto c = t.add(t.mul(in, in), t.constant(1.0));
      return t.div(b, c);
    };
    items.push_back({"elementwise chain", sg::grad_check(f, x, o.h), o.tol});
  }
  {
    sg::Tensor<double> a = sg::Tensor<double>::zeros({3, 4});
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.normal();
    sg::Tensor<double> b = sg::Tensor<double>::zeros({4, 2});
    for (std::size_t i = 0; i < b.numel(); ++i) b[i] = rng.normal();
    auto f = [&b](sg::Tape<double>& t, sg::Var<double> in) {
      auto m = t.matmul(in, t.constant(b));
      return t.mul(m, m);
    };
    items.push_back({"matmul chain", sg::grad_check(f, a, o.h), o.tol});
  }
  {
    sg::Tensor<double> logits = sg::Tensor<double>::zeros({4, 3});
    for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = rng.normal();
    const std::vector<int> labels = {0, 2, 1, 2};
    auto f = [&labels](sg::Tape<double>& t, sg::Var<double> in) {
      return t.cross_entropy(in, labels);
    };
    items.push_back({"softmax cross entropy", sg::grad_check(f, logits, o.h), o.tol});
  }
  {
    // Recurrent membrane path over 6 steps. Inputs are scaled so no unit ever
    // nears the threshold and the surrogate is a narrow gaussian, which keeps
    // the step's surrogate contribution below 1e-70: the finite difference
    // then probes exactly the smooth part of the unrolled recurrence.
    sg::NetworkConfig net;
    net.inputs = 2;
    net.hidden = 4;
    net.classes = 2;
    net.shape = sg::SurrogateShape::gaussian(0.0, 0.05);
    net.mech = sg::Mechanism::CustomBackward;
    net.seed = o.seed;
    auto w = sg::init_weights<double>(net);
    std::vector<sg::Tensor<double>> xs;
    for (int s = 0; s < 6; ++s) {
      sg::Tensor<double> x = sg::Tensor<double>::zeros({2, 2});
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] = 0.05 * rng.normal();
      xs.push_back(x);
    }
    const std::vector<int> labels = {0, 1};
    auto f = [&](sg::Tape<double>& t, sg::Var<double> w_in) {
      sg::WeightVars<double> wv{w_in, t.constant(w.w_rec), t.constant(w.w_out),
                                t.constant(w.b_out)};
      std::vector<sg::Var<double>> vars;
      for (const auto& x : xs) vars.push_back(t.constant(x));
      auto seq = sg::forward_sequence(t, wv, vars, net);
      return t.cross_entropy(seq.logits, labels);
    };
    items.push_back({"recurrent membrane path", sg::grad_check(f, w.w_in, o.h), 1e-5});
  }
  {
    std::vector<double> pts;
    for (double x = -5.0; x <= 5.0 + 1e-12; x += 0.01) pts.push_back(x);
    sg::Tensor<double> grid = sg::Tensor<double>::vector(pts);
    auto got = grid_mechanism_grad(grid, sg::SurrogateShape::tanh_deriv(), sg::Mechanism::Bypass);
    const double h = 1e-6;
    double err = 0.0;
    for (std::size_t i = 0; i < grid.numel(); ++i) {
      const double fd = (std::tanh(grid[i] + h) - std::tanh(grid[i] - h)) / (2.0 * h);
      err = std::max(err, std::fabs(got[i] - fd));
    }
    items.push_back({"bypass backward vs fd of smooth stand-in", err, o.tol});
  }
  {
    std::vector<double> pts;
    for (double x = -5.0; x <= 5.0 + 1e-12; x += 0.01) pts.push_back(x);
    sg::Tensor<double> grid = sg::Tensor<double>::vector(pts);
    const auto shape = sg::SurrogateShape::double_gaussian();
    auto got = grid_mechanism_grad(grid, shape, sg::Mechanism::Inject);
    const sg::Tensor<double> want = sg::eval_shape(shape, grid);
    double err = 0.0;
    for (std::size_t i = 0; i < grid.numel(); ++i)
      err = std::max(err, std::fabs(got[i] - want[i]));
    items.push_back({"injected gradient vs closed form", err, 1e-14});
  }

  bool ok = true;
  for (const auto& it : items) {
    const bool pass = it.err <= it.tol;
    ok = ok && pass;
    std::cout << std::left << std::setw(42) << it.name << " max err " << std::scientific
              << std::setprecision(3) << it.err << "  tol " << it.tol << (pass ? "  ok" : "  FAIL")
              << std::defaultfloat << '\n';
  }
  std::cout << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return ok ? 0 : 1;
}

struct FuseOpts {
  std::string input;
  std::string out_dir = "out";
};

int run_fuse(const FuseOpts& o) {
  std::ifstream f(o.input);
  if (!f) throw sg::IoError("cannot open '" + o.input + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  sg::Snapshot<double> snap = sg::parse_snapshot<double>(ss.str());
  std::cout << "parsed " << snap.nodes.size() << " nodes\n";
  auto report = sg::fuse_all(snap);
  std::cout << report.summary() << '\n';
  ensure_out_dir(o.out_dir);
  const std::string out_path = join_path(o.out_dir, "fused_graph.txt");
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw sg::IoError("cannot open '" + out_path + "' for writing");
  out << sg::dump_snapshot(snap);
  std::cout << "wrote " << out_path << '\n';
  return 0;
}

struct EmitOpts {
  std::string records;
  std::string out_dir = "out";
};

int run_emit(const EmitOpts& o) {
  auto records = sg::parse_records_csv(o.records);
  auto rows = sg::summarize(records);
  ensure_out_dir(o.out_dir);
  const std::string summary_path = join_path(o.out_dir, "bench_summary.csv");
  sg::write_summary_csv(summary_path, rows);
  sg::write_plot_data(join_path(o.out_dir, "plot_fwd.dat"), rows, true);
  sg::write_plot_data(join_path(o.out_dir, "plot_bwd.dat"), rows, false);
  std::cout << "summarized " << records.size() << " records into " << rows.size() << " cells\n";
  print_summary_table(rows);
  std::cout << "wrote " << summary_path << ", plot_fwd.dat, plot_bwd.dat\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"surrogate-gradient spiking network workbench"};
  app.require_subcommand(1);

  TrainOpts train_o;
  CLI::App* train_cmd = app.add_subcommand("train", "train a recurrent spiking classifier");
  train_cmd->add_option("--seq-len", train_o.seq_len, "timesteps per sequence");
  train_cmd->add_option("--mechanism", train_o.mechanism,
                        "surrogate mechanism: custom, bypass, inject, fused");
  train_cmd->add_option("--shape", train_o.shape,
                        "surrogate shape: gaussian, dblgaussian, tanhderiv");
  train_cmd->add_option("--readout", train_o.readout, "readout: membrane or spikes");
  train_cmd->add_option("--optimizer", train_o.optimizer, "optimizer: adam or sgd");
  train_cmd->add_option("--graph-mode", train_o.graph_mode, "graph mode: dynamic or fused");
  train_cmd->add_option("--precision", train_o.precision, "arithmetic: f64 or f32")
      ->check(CLI::IsMember({"f64", "f32"}));
  train_cmd->add_option("--iters", train_o.iters, "training iterations");
  train_cmd->add_option("--batch", train_o.batch, "batch size");
  train_cmd->add_option("--hidden", train_o.hidden, "hidden units");
  train_cmd->add_option("--classes", train_o.classes, "synthetic class count");
  train_cmd->add_option("--count", train_o.count, "synthetic sequence count");
  train_cmd->add_option("--lr", train_o.lr, "learning rate");
  train_cmd->add_option("--seed", train_o.seed, "master seed");
  train_cmd->add_option("--data-dir", train_o.data_dir, "directory with IDX files");
  train_cmd->add_option("--out-dir", train_o.out_dir, "output directory");
  train_cmd->add_option("--load", train_o.load_path, "resume from a weights file");
  train_cmd->add_option("--log-every", train_o.log_every, "progress line interval, 0 = quiet");
  train_cmd->add_option("--eval-limit", train_o.eval_limit, "evaluation row cap, 0 = all");
  train_cmd->add_flag("--dump-graph", train_o.dump_graph,
                      "write the first iteration's graph to graph.txt");

  BenchOpts bench_o;
  CLI::App* bench_cmd = app.add_subcommand("bench", "time the mechanism / graph-mode grid");
  bench_cmd->add_option("--mechanism", bench_o.mechanisms, "mechanisms to time")
      ->delimiter(',');
  bench_cmd->add_option("--graph-mode", bench_o.graph_modes, "graph modes to time")
      ->delimiter(',');
  bench_cmd->add_option("--seq-len", bench_o.seq_lens, "sequence lengths to time")
      ->delimiter(',');
  bench_cmd->add_option("--shape", bench_o.shape, "surrogate shape for non-bypass cells");
  bench_cmd->add_option("--precision", bench_o.precision, "arithmetic: f64 or f32")
      ->check(CLI::IsMember({"f64", "f32"}));
  bench_cmd->add_option("--iters", bench_o.iters, "timed iterations per cell");
  bench_cmd->add_option("--repeats", bench_o.repeats, "repeat count for the timing loop");
  bench_cmd->add_option("--batch", bench_o.batch, "batch size");
  bench_cmd->add_option("--hidden", bench_o.hidden, "hidden units");
  bench_cmd->add_option("--classes", bench_o.classes, "synthetic class count");
  bench_cmd->add_option("--count", bench_o.count, "synthetic sequence count");
  bench_cmd->add_option("--check-tol", bench_o.check_tol, "correctness gate tolerance");
  bench_cmd->add_option("--seed", bench_o.seed, "master seed");
  bench_cmd->add_option("--data-dir", bench_o.data_dir, "directory with IDX files");
  bench_cmd->add_option("--out-dir", bench_o.out_dir, "output directory");

  GradcheckOpts grad_o;
  CLI::App* grad_cmd =
      app.add_subcommand("gradcheck", "finite-difference and closed-form gradient battery");
  grad_cmd->add_option("--seed", grad_o.seed, "master seed");
  grad_cmd->add_option("--step", grad_o.h, "central difference step");
  grad_cmd->add_option("--tol", grad_o.tol, "relative error bound for smooth items");

  FuseOpts fuse_o;
  CLI::App* fuse_cmd = app.add_subcommand("fuse", "rewrite a dumped graph file");
  fuse_cmd->add_option("input", fuse_o.input, "graph dump to read")->required();
  fuse_cmd->add_option("--out-dir", fuse_o.out_dir, "output directory");

  EmitOpts emit_o;
  CLI::App* emit_cmd = app.add_subcommand("emit", "derive summary and plot data from records");
  emit_cmd->add_option("records", emit_o.records, "bench records CSV to read")->required();
  emit_cmd->add_option("--out-dir", emit_o.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd)
      return train_o.precision == "f32" ? run_train<float>(train_o) : run_train<double>(train_o);
    if (*bench_cmd)
      return bench_o.precision == "f32" ? run_bench_cmd<float>(bench_o)
                                        : run_bench_cmd<double>(bench_o);
    if (*grad_cmd) return run_gradcheck(grad_o);
    if (*fuse_cmd) return run_fuse(fuse_o);
    if (*emit_cmd) return run_emit(emit_o);
  } catch (const sg::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
