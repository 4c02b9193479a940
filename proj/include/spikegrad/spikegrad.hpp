// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include "spikegrad/alif.hpp"
#include "spikegrad/bench.hpp"
#include "spikegrad/checkpoint.hpp"
#include "spikegrad/data.hpp"
#include "spikegrad/errors.hpp"
#include "spikegrad/format.hpp"
#include "spikegrad/graph_opt.hpp"
#include "spikegrad/rng.hpp"
#include "spikegrad/shapes.hpp"
#include "spikegrad/snapshot.hpp"
#include "spikegrad/surrogate.hpp"
#include "spikegrad/tape.hpp"
#include "spikegrad/tensor.hpp"
#include "spikegrad/trainer.hpp"
