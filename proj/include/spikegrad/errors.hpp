// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <stdexcept>
#include <string>

namespace spikegrad {

/// Base class for all spikegrad errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operand shapes are incompatible (rank or extent mismatch).
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// A parameter value is outside its valid domain (e.g. a non-positive width).
struct ValueError : Error {
  explicit ValueError(const std::string& msg) : Error(msg) {}
};

/// A file does not follow the expected binary or textual format.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

/// Two inputs that must agree do not (e.g. image/label counts).
struct ConsistencyError : Error {
  explicit ConsistencyError(const std::string& msg) : Error(msg) {}
};

/// An underlying read or write failed or ended early.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

/// The API was called in a way its contract does not allow.
struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

/// The requested combination of options is not provided.
struct UnsupportedError : Error {
  explicit UnsupportedError(const std::string& msg) : Error(msg) {}
};

/// A graph snapshot violates its structural invariants.
struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

}  // namespace spikegrad
