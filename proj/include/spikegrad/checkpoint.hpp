// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "spikegrad/alif.hpp"
#include "spikegrad/errors.hpp"
#include "spikegrad/tensor.hpp"

namespace spikegrad {

namespace detail {

// Explicit little-endian encoding, independent of host order.
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, const std::string& what) : buf_(buf), what_(what) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::uint8_t byte() { return static_cast<std::uint8_t>(buf_[pos_++]); }

  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError(what_ + ": truncated checkpoint");
  }

  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'S', 'G', 'W', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes the four weight tensors as named f64 blocks behind a magic and
/// version header. Byte order is little-endian regardless of host.
template <class Real>
void save_weights(const std::string& path, const NetworkWeights<Real>& w) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, 4);
  const std::pair<const char*, const Tensor<Real>*> entries[] = {
      {"w_in", &w.w_in}, {"w_rec", &w.w_rec}, {"w_out", &w.w_out}, {"b_out", &w.b_out}};
  for (const auto& [name, t] : entries) {
    const std::string n = name;
    detail::put_u32(out, static_cast<std::uint32_t>(n.size()));
    out += n;
    detail::put_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d = 0; d < t->rank(); ++d) detail::put_u64(out, t->extent(d));
    for (std::size_t i = 0; i < t->numel(); ++i) detail::put_f64(out, static_cast<double>((*t)[i]));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to '" + path + "'");
}

template <class Real>
NetworkWeights<Real> load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::ByteReader r(buf, path);

  if (r.bytes(4) != std::string(kCheckpointMagic, 4))
    throw FormatError(path + ": not a weight checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  if (count != 4) throw FormatError(path + ": expected 4 tensors, found " + std::to_string(count));

  NetworkWeights<Real> w;
  const char* order[] = {"w_in", "w_rec", "w_out", "b_out"};
  Tensor<Real>* dests[] = {&w.w_in, &w.w_rec, &w.w_out, &w.b_out};
  for (int k = 0; k < 4; ++k) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    if (name != order[k])
      throw FormatError(path + ": expected tensor '" + order[k] + "', found '" + name + "'");
    const std::uint32_t rank = r.u32();
    if (rank > 2) throw FormatError(path + ": tensor rank " + std::to_string(rank) + " out of range");
    std::vector<std::size_t> shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(r.u64()));
      numel *= shape.back();
    }
    std::vector<Real> data(numel);
    for (std::size_t i = 0; i < numel; ++i) data[i] = static_cast<Real>(r.f64());
    *dests[k] = Tensor<Real>(std::move(shape), std::move(data));
  }
  if (!r.at_end()) throw FormatError(path + ": trailing bytes after last tensor");
  if (w.w_in.rank() != 2 || w.w_rec.rank() != 2 || w.w_out.rank() != 2 || w.b_out.rank() != 1)
    throw FormatError(path + ": tensor ranks do not describe a network");
  if (w.w_in.extent(1) != w.w_rec.extent(0) || w.w_rec.extent(0) != w.w_rec.extent(1) ||
      w.w_rec.extent(1) != w.w_out.extent(0) || w.w_out.extent(1) != w.b_out.extent(0))
    throw ConsistencyError(path + ": tensor shapes disagree on layer sizes");
  return w;
}

}  // namespace spikegrad
