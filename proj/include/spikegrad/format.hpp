// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <cstdio>
#include <string>

namespace spikegrad {

/// Fixed-point formatting with a given number of decimals ('.' separator,
/// locale independent).
inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

/// Shortest round-trippable representation of a double.
inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace spikegrad
