// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <cstddef>
#include <vector>

#include "spikegrad/rng.hpp"
#include "spikegrad/surrogate.hpp"
#include "spikegrad/tape.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad::testing {

struct FuzzGraph {
  Tape<double> tape;
  Var<double> loss;
  std::vector<Var<double>> leaves;
  std::size_t planted_inject = 0;
  std::size_t planted_bypass = 0;
};

/// Random bounded-value graph over a handful of vector leaves, with
/// `inject_sites` and `bypass_sites` spike motifs planted at random depths.
/// Ops are restricted to ones that keep magnitudes tame so gradients stay
/// finite for any seed.
inline void build_fuzz_graph(FuzzGraph& g, std::uint64_t seed, std::size_t inject_sites,
                             std::size_t bypass_sites, std::size_t extra_ops = 12) {
  Rng rng(seed);
  auto& t = g.tape;
  const std::size_t n = 3;
  const std::size_t n_leaves = 2 + rng.below(3);
  std::vector<Var<double>> pool;
  for (std::size_t i = 0; i < n_leaves; ++i) {
    std::vector<double> vals(n);
    for (auto& v : vals) v = rng.uniform(-1.5, 1.5);
    auto leaf = t.leaf(Tensor<double>::vector(vals), true);
    g.leaves.push_back(leaf);
    pool.push_back(leaf);
  }

  auto pick = [&]() { return pool[rng.below(pool.size())]; };

  std::size_t inject_left = inject_sites, bypass_left = bypass_sites;
  const std::size_t total_steps = extra_ops + inject_sites + bypass_sites;
  for (std::size_t step = 0; step < total_steps; ++step) {
    const std::size_t remaining = total_steps - step;
    const bool must_plant = remaining <= inject_left + bypass_left;
    const bool plant = must_plant || (inject_left + bypass_left > 0 && rng.below(3) == 0);
    if (plant && inject_left + bypass_left > 0) {
      const bool do_inject = bypass_left == 0 || (inject_left > 0 && rng.below(2) == 0);
      if (do_inject) {
        pool.push_back(spike(t, pick(), SurrogateShape::double_gaussian(), Mechanism::Inject));
        --inject_left;
        ++g.planted_inject;
      } else {
        pool.push_back(spike(t, pick(), SurrogateShape::tanh_deriv(), Mechanism::Bypass));
        --bypass_left;
        ++g.planted_bypass;
      }
      continue;
    }
    switch (rng.below(5)) {
      case 0: pool.push_back(t.add(pick(), pick())); break;
      case 1: pool.push_back(t.sub(pick(), pick())); break;
      case 2: pool.push_back(t.mul(pick(), pick())); break;
      case 3: pool.push_back(t.tanh(pick())); break;
      default: pool.push_back(t.neg(pick())); break;
    }
  }

  // Tie everything reachable into one scalar so every leaf can get gradient.
  Var<double> acc = pool[0];
  for (std::size_t i = 1; i < pool.size(); ++i)
    if (rng.below(2) == 0) acc = t.add(acc, pool[i]);
  acc = t.add(acc, pool.back());
  g.loss = t.sum(acc);
  t.set_tag(g.loss, "loss");
}

}  // namespace spikegrad::testing
