// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "spikegrad/errors.hpp"
#include "spikegrad/rng.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

/// Labeled image set, pixels already scaled to [0, 1], one row per image.
struct Dataset {
  std::size_t count = 0;
  std::size_t pixels = 0;
  std::vector<double> images;  // count * pixels, row-major
  std::vector<int> labels;
  std::size_t classes = 0;
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& f, const std::string& what) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw FormatError(what + ": truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace detail

/// Reads big-endian IDX image (magic 0x803) and label (magic 0x801) files
/// into one dataset; byte pixels are scaled by 1/255.
inline Dataset load_idx(const std::string& image_path, const std::string& label_path) {
  std::ifstream fi(image_path, std::ios::binary);
  if (!fi) throw IoError("cannot open '" + image_path + "'");
  if (detail::read_be_u32(fi, image_path) != 0x00000803u)
    throw FormatError(image_path + ": bad image magic");
  const std::uint32_t count = detail::read_be_u32(fi, image_path);
  const std::uint32_t rows = detail::read_be_u32(fi, image_path);
  const std::uint32_t cols = detail::read_be_u32(fi, image_path);

  Dataset ds;
  ds.count = count;
  ds.pixels = std::size_t(rows) * cols;
  ds.images.resize(ds.count * ds.pixels);
  std::vector<unsigned char> buf(ds.pixels);
  for (std::size_t i = 0; i < ds.count; ++i) {
    fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!fi) throw FormatError(image_path + ": truncated image data");
    for (std::size_t p = 0; p < ds.pixels; ++p)
      ds.images[i * ds.pixels + p] = buf[p] / 255.0;
  }

  std::ifstream fl(label_path, std::ios::binary);
  if (!fl) throw IoError("cannot open '" + label_path + "'");
  if (detail::read_be_u32(fl, label_path) != 0x00000801u)
    throw FormatError(label_path + ": bad label magic");
  const std::uint32_t lcount = detail::read_be_u32(fl, label_path);
  if (lcount != count)
    throw ConsistencyError(label_path + ": " + std::to_string(lcount) + " labels for " +
                           std::to_string(count) + " images");
  ds.labels.resize(ds.count);
  int max_label = -1;
  for (std::size_t i = 0; i < ds.count; ++i) {
    char c;
    fl.read(&c, 1);
    if (!fl) throw FormatError(label_path + ": truncated label data");
    ds.labels[i] = static_cast<unsigned char>(c);
    if (ds.labels[i] > max_label) max_label = ds.labels[i];
  }
  ds.classes = static_cast<std::size_t>(max_label + 1);
  return ds;
}

/// Synthetic stand-in with the same geometry as the digit set. Class c keeps
/// every C-th four-pixel chunk bright, offset by c, so any chunk-aligned
/// sequence split still sees class-distinctive inputs. Uniform noise of
/// +-0.05, clamped to [0, 1].
inline Dataset synthetic_dataset(std::size_t classes, std::size_t count, std::uint64_t seed,
                                 std::size_t pixels = 784) {
  if (classes < 2) throw ValueError("need at least two classes");
  if (pixels % 4 != 0) throw ValueError("pixel count must be a multiple of four");
  Dataset ds;
  ds.count = count;
  ds.pixels = pixels;
  ds.classes = classes;
  ds.images.resize(count * pixels);
  ds.labels.resize(count);
  Rng rng(derive_seed(seed, 0xda7a));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = i % classes;  // interleaved so any prefix is balanced
    ds.labels[i] = static_cast<int>(c);
    for (std::size_t p = 0; p < pixels; ++p) {
      const double base = ((p / 4 + c) % classes == 0) ? 0.85 : 0.15;
      double v = base + rng.uniform(-0.05, 0.05);
      if (v < 0.0) v = 0.0;
      if (v > 1.0) v = 1.0;
      ds.images[i * pixels + p] = v;
    }
  }
  return ds;
}

/// Sequence lengths the timing sweep uses, from one 28-pixel row per step
/// down to a single pixel per step.
inline const std::vector<std::size_t>& standard_seq_lens() {
  static const std::vector<std::size_t> lens = {28, 49, 98, 196, 392, 784};
  return lens;
}

/// Splits a flat image into seq_len timesteps of pixels/seq_len values each.
/// seq_len must divide the pixel count; the split is a bijection on the
/// pixel order (timestep-major).
inline void check_seq_len(std::size_t seq_len, std::size_t pixels) {
  if (seq_len == 0 || pixels % seq_len != 0) {
    std::string valid;
    for (std::size_t t = 1; t <= pixels; ++t) {
      if (pixels % t == 0 && t >= 28) {
        if (!valid.empty()) valid += ", ";
        valid += std::to_string(t);
      }
    }
    throw ValueError("sequence length " + std::to_string(seq_len) + " does not divide " +
                     std::to_string(pixels) + " pixels (usable: " + valid + ")");
  }
}

/// One training batch: per-timestep input matrices plus labels.
struct Batch {
  std::vector<Tensor<double>> steps;  // seq_len tensors of [batch x pixels/seq_len]
  std::vector<int> labels;
};

/// Assembles rows `indices` of the dataset into a batch of seq_len steps.
inline Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                        std::size_t seq_len) {
  check_seq_len(seq_len, ds.pixels);
  if (indices.empty()) throw UsageError("empty batch");
  const std::size_t step_dim = ds.pixels / seq_len;
  Batch b;
  b.steps.reserve(seq_len);
  b.labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= ds.count) throw UsageError("batch index out of range");
    b.labels.push_back(ds.labels[idx]);
  }
  for (std::size_t t = 0; t < seq_len; ++t) {
    Tensor<double> step = Tensor<double>::zeros({indices.size(), step_dim});
    for (std::size_t r = 0; r < indices.size(); ++r) {
      const double* img = &ds.images[indices[r] * ds.pixels];
      for (std::size_t k = 0; k < step_dim; ++k) step.at2(r, k) = img[t * step_dim + k];
    }
    b.steps.push_back(std::move(step));
  }
  return b;
}

/// Deterministic epoch sampler: shuffles once per pass with a seeded
/// generator and hands out fixed-size index groups.
class Batcher {
 public:
  Batcher(std::size_t count, std::size_t batch, std::uint64_t seed)
      : count_(count), batch_(batch), rng_(derive_seed(seed, 0xba7c)) {
    if (batch_ == 0 || batch_ > count_) throw UsageError("batch size must be in [1, count]");
    order_.resize(count_);
    for (std::size_t i = 0; i < count_; ++i) order_[i] = i;
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    out.reserve(batch_);
    for (std::size_t k = 0; k < batch_; ++k) {
      if (pos_ == count_) {
        reshuffle();
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() { rng_.shuffle(order_); }

  std::size_t count_, batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace spikegrad
