// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "spikegrad/errors.hpp"
#include "spikegrad/rng.hpp"
#include "spikegrad/surrogate.hpp"
#include "spikegrad/tape.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

/// Leaky integrate-and-fire dynamics with an adaptive threshold. alpha and
/// gamma are the per-step decay factors of the membrane and the adaptation
/// trace; the firing threshold is b0 + beta * adaptation.
struct AlifParams {
  double alpha = 0.0;
  double gamma = 0.0;
  double b0 = 1.0;
  double beta = 1.8;

  static AlifParams from_time_constants(double dt = 1.0, double tau_m = 20.0,
                                        double tau_adp = 200.0, double b0 = 1.0,
                                        double beta = 1.8) {
    if (!(dt > 0.0) || !(tau_m > 0.0) || !(tau_adp > 0.0))
      throw ValueError("time step and time constants must be positive");
    AlifParams p;
    p.alpha = std::exp(-dt / tau_m);
    p.gamma = std::exp(-dt / tau_adp);
    p.b0 = b0;
    p.beta = beta;
    return p;
  }
};

/// Per-timestep neuron state, one row per batch element.
template <class Real>
struct AlifState {
  Var<Real> u;      // membrane potential
  Var<Real> eta;    // adaptation trace
  Var<Real> theta;  // firing threshold
  Var<Real> z;      // spike output, 0 or 1
};

/// The parameter constants of one cell, recorded once per tape so the
/// unrolled steps share them.
template <class Real>
struct AlifCell {
  AlifParams params;
  Var<Real> alpha, one_minus_alpha;
  Var<Real> gamma, one_minus_gamma;
  Var<Real> b0, beta;
};

template <class Real>
AlifCell<Real> make_alif_cell(Tape<Real>& t, const AlifParams& p) {
  AlifCell<Real> c;
  c.params = p;
  c.alpha = t.constant(Real(p.alpha));
  c.one_minus_alpha = t.constant(Real(1) - Real(p.alpha));
  c.gamma = t.constant(Real(p.gamma));
  c.one_minus_gamma = t.constant(Real(1) - Real(p.gamma));
  c.b0 = t.constant(Real(p.b0));
  c.beta = t.constant(Real(p.beta));
  return c;
}

/// Resting state: membrane, adaptation, and spikes at zero, threshold at b0.
template <class Real>
AlifState<Real> initial_state(Tape<Real>& t, const AlifCell<Real>& cell, std::size_t batch,
                              std::size_t hidden) {
  AlifState<Real> s;
  s.u = t.constant(Tensor<Real>::zeros({batch, hidden}));
  s.eta = t.constant(Tensor<Real>::zeros({batch, hidden}));
  s.theta = t.constant(Tensor<Real>::full({batch, hidden}, Real(cell.params.b0)));
  s.z = t.constant(Tensor<Real>::zeros({batch, hidden}));
  return s;
}

/// One timestep given the input current. Update order is membrane, then
/// adaptation, then threshold, then spike; the reset subtracts the previous
/// threshold where the previous step fired.
template <class Real>
AlifState<Real> alif_step(Tape<Real>& t, const AlifCell<Real>& cell, const AlifState<Real>& prev,
                          Var<Real> current, const SurrogateShape& shape, Mechanism mech) {
  AlifState<Real> next;
  next.u = t.sub(t.add(t.mul(cell.alpha, prev.u), t.mul(cell.one_minus_alpha, current)),
                 t.mul(prev.theta, prev.z));
  next.eta = t.add(t.mul(cell.gamma, prev.eta), t.mul(cell.one_minus_gamma, prev.z));
  next.theta = t.add(cell.b0, t.mul(cell.beta, next.eta));
  next.z = spike(t, t.sub(next.u, next.theta), shape, mech);
  return next;
}

enum class Readout { Membrane, Spikes };

/// One recurrent spiking layer plus a linear readout of the last timestep.
struct NetworkConfig {
  std::size_t inputs = 1;
  std::size_t hidden = 64;
  std::size_t classes = 10;
  AlifParams alif = AlifParams::from_time_constants();
  SurrogateShape shape = SurrogateShape::double_gaussian();
  Mechanism mech = Mechanism::CustomBackward;
  Readout readout = Readout::Membrane;
  std::uint64_t seed = 1;
};

template <class Real>
struct NetworkWeights {
  Tensor<Real> w_in;   // [inputs x hidden]
  Tensor<Real> w_rec;  // [hidden x hidden]
  Tensor<Real> w_out;  // [hidden x classes]
  Tensor<Real> b_out;  // [classes]
};

/// Gaussian init with standard deviation 1/sqrt(fan_in); the readout bias
/// starts at zero. Each matrix draws from its own derived seed stream.
template <class Real>
NetworkWeights<Real> init_weights(const NetworkConfig& cfg) {
  auto fill = [](Tensor<Real>& t, Rng& rng, double sd) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = Real(rng.normal(0.0, sd));
  };
  NetworkWeights<Real> w;
  w.w_in = Tensor<Real>::zeros({cfg.inputs, cfg.hidden});
  w.w_rec = Tensor<Real>::zeros({cfg.hidden, cfg.hidden});
  w.w_out = Tensor<Real>::zeros({cfg.hidden, cfg.classes});
  w.b_out = Tensor<Real>::zeros({cfg.classes});
  Rng r_in(derive_seed(cfg.seed, 0));
  Rng r_rec(derive_seed(cfg.seed, 1));
  Rng r_out(derive_seed(cfg.seed, 2));
  fill(w.w_in, r_in, 1.0 / std::sqrt(static_cast<double>(cfg.inputs)));
  fill(w.w_rec, r_rec, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
  fill(w.w_out, r_out, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
  return w;
}

template <class Real>
struct WeightVars {
  Var<Real> w_in, w_rec, w_out, b_out;
};

/// Records the weights as trainable leaves with their canonical tags.
template <class Real>
WeightVars<Real> make_weight_vars(Tape<Real>& t, const NetworkWeights<Real>& w) {
  WeightVars<Real> v;
  v.w_in = t.leaf(w.w_in, true);
  t.set_tag(v.w_in, "w_in");
  v.w_rec = t.leaf(w.w_rec, true);
  t.set_tag(v.w_rec, "w_rec");
  v.w_out = t.leaf(w.w_out, true);
  t.set_tag(v.w_out, "w_out");
  v.b_out = t.leaf(w.b_out, true);
  t.set_tag(v.b_out, "b_out");
  return v;
}

template <class Real>
struct SequenceResult {
  Var<Real> logits;                    // [batch x classes]
  std::vector<Var<Real>> spikes;       // z_t per step
  AlifState<Real> final_state;
};

/// Unrolls the network over the per-step input leaves (each [batch x inputs])
/// and reads out the last timestep.
template <class Real>
SequenceResult<Real> forward_sequence(Tape<Real>& t, const WeightVars<Real>& w,
                                      const std::vector<Var<Real>>& xs,
                                      const NetworkConfig& cfg) {
  if (xs.empty()) throw UsageError("forward_sequence needs at least one timestep");
  const std::size_t batch = xs[0].value().extent(0);
  AlifCell<Real> cell = make_alif_cell(t, cfg.alif);
  AlifState<Real> st = initial_state(t, cell, batch, cfg.hidden);
  SequenceResult<Real> out;
  out.spikes.reserve(xs.size());
  for (Var<Real> x : xs) {
    Var<Real> current = t.add(t.matmul(x, w.w_in), t.matmul(st.z, w.w_rec));
    st = alif_step(t, cell, st, current, cfg.shape, cfg.mech);
    out.spikes.push_back(st.z);
  }
  Var<Real> readout = cfg.readout == Readout::Membrane ? st.u : st.z;
  out.logits = t.add_rowvec(t.matmul(readout, w.w_out), w.b_out);
  t.set_tag(out.logits, "logits");
  out.final_state = st;
  return out;
}

}  // namespace spikegrad
