// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#include "spikegrad/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "spikegrad/errors.hpp"

namespace sg = spikegrad;

namespace {

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void push_be_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back((v >> 24) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back(v & 0xff);
}

// Two 2x2 images with labels 3 and 1.
void write_tiny_idx(const std::string& img_path, const std::string& lbl_path) {
  std::vector<unsigned char> img;
  push_be_u32(img, 0x00000803u);
  push_be_u32(img, 2);
  push_be_u32(img, 2);
  push_be_u32(img, 2);
  for (unsigned char b : {0, 51, 102, 255, 255, 204, 153, 0}) img.push_back(b);
  write_bytes(img_path, img);

  std::vector<unsigned char> lbl;
  push_be_u32(lbl, 0x00000801u);
  push_be_u32(lbl, 2);
  lbl.push_back(3);
  lbl.push_back(1);
  write_bytes(lbl_path, lbl);
}

}  // namespace

TEST(Data, LoadsIdxPairAndScales) {
  const std::string dir = ::testing::TempDir();
  write_tiny_idx(dir + "ti.idx", dir + "tl.idx");
  auto ds = sg::load_idx(dir + "ti.idx", dir + "tl.idx");
  EXPECT_EQ(ds.count, 2u);
  EXPECT_EQ(ds.pixels, 4u);
  EXPECT_EQ(ds.classes, 4u);  // max label 3
  EXPECT_EQ(ds.labels[0], 3);
  EXPECT_EQ(ds.labels[1], 1);
  EXPECT_DOUBLE_EQ(ds.images[0], 0.0);
  EXPECT_DOUBLE_EQ(ds.images[1], 51.0 / 255.0);
  EXPECT_DOUBLE_EQ(ds.images[3], 1.0);
  EXPECT_DOUBLE_EQ(ds.images[4], 1.0);
}

TEST(Data, RejectsBadMagicAndTruncation) {
  const std::string dir = ::testing::TempDir();
  write_tiny_idx(dir + "gi.idx", dir + "gl.idx");

  std::vector<unsigned char> bad;
  push_be_u32(bad, 0x00000801u);  // label magic in an image slot
  push_be_u32(bad, 2);
  push_be_u32(bad, 2);
  push_be_u32(bad, 2);
  write_bytes(dir + "badmagic.idx", bad);
  EXPECT_THROW(sg::load_idx(dir + "badmagic.idx", dir + "gl.idx"), sg::FormatError);
  EXPECT_THROW(sg::load_idx(dir + "gl.idx", dir + "gl.idx"), sg::FormatError);

  std::vector<unsigned char> cut;
  push_be_u32(cut, 0x00000803u);
  push_be_u32(cut, 2);
  push_be_u32(cut, 2);
  push_be_u32(cut, 2);
  cut.push_back(7);  // far too few pixel bytes
  write_bytes(dir + "cutimg.idx", cut);
  EXPECT_THROW(sg::load_idx(dir + "cutimg.idx", dir + "gl.idx"), sg::FormatError);

  EXPECT_THROW(sg::load_idx(dir + "absent.idx", dir + "gl.idx"), sg::IoError);
}

TEST(Data, RejectsCountMismatch) {
  const std::string dir = ::testing::TempDir();
  write_tiny_idx(dir + "mi.idx", dir + "ml.idx");
  std::vector<unsigned char> lbl;
  push_be_u32(lbl, 0x00000801u);
  push_be_u32(lbl, 3);
  lbl.push_back(0);
  lbl.push_back(1);
  lbl.push_back(0);
  write_bytes(dir + "three.idx", lbl);
  EXPECT_THROW(sg::load_idx(dir + "mi.idx", dir + "three.idx"), sg::ConsistencyError);
}

TEST(Data, SyntheticClassesAreSeparated) {
  auto ds = sg::synthetic_dataset(2, 8, 5);
  EXPECT_EQ(ds.count, 8u);
  EXPECT_EQ(ds.pixels, 784u);
  EXPECT_EQ(ds.classes, 2u);
  // Interleaved labels.
  for (std::size_t i = 0; i < ds.count; ++i) EXPECT_EQ(ds.labels[i], static_cast<int>(i % 2));
  // Anti-phase chunk patterns: class 0 bright where class 1 is dark.
  for (std::size_t p = 0; p < ds.pixels; ++p) {
    const double v0 = ds.images[0 * ds.pixels + p];
    const double v1 = ds.images[1 * ds.pixels + p];
    if ((p / 4) % 2 == 0) {
      EXPECT_GT(v0, 0.7);
      EXPECT_LT(v1, 0.3);
    } else {
      EXPECT_LT(v0, 0.3);
      EXPECT_GT(v1, 0.7);
    }
    EXPECT_GE(v0, 0.0);
    EXPECT_LE(v0, 1.0);
  }
  // Seed determinism.
  auto again = sg::synthetic_dataset(2, 8, 5);
  EXPECT_EQ(again.images, ds.images);
  auto other = sg::synthetic_dataset(2, 8, 6);
  EXPECT_NE(other.images, ds.images);
  EXPECT_THROW(sg::synthetic_dataset(1, 8, 5), sg::ValueError);
}

TEST(Data, SequenceSplitIsABijection) {
  auto ds = sg::synthetic_dataset(2, 4, 11);
  for (std::size_t seq_len : sg::standard_seq_lens()) {
    auto batch = sg::make_batch(ds, {2, 0}, seq_len);
    ASSERT_EQ(batch.steps.size(), seq_len);
    const std::size_t dim = ds.pixels / seq_len;
    EXPECT_EQ(batch.labels[0], ds.labels[2]);
    EXPECT_EQ(batch.labels[1], ds.labels[0]);
    // Reassemble and compare against the flat originals.
    for (std::size_t r = 0; r < 2; ++r) {
      const std::size_t src = r == 0 ? 2 : 0;
      for (std::size_t t = 0; t < seq_len; ++t)
        for (std::size_t k = 0; k < dim; ++k)
          ASSERT_EQ(batch.steps[t].at2(r, k), ds.images[src * ds.pixels + t * dim + k])
              << "seq_len " << seq_len;
    }
  }
}

TEST(Data, SequenceLengthMustDividePixels) {
  auto ds = sg::synthetic_dataset(2, 2, 1);
  EXPECT_THROW(sg::make_batch(ds, {0}, 100), sg::ValueError);
  EXPECT_THROW(sg::make_batch(ds, {0}, 0), sg::ValueError);
  try {
    sg::make_batch(ds, {0}, 100);
    FAIL() << "expected ValueError";
  } catch (const sg::ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("784"), std::string::npos);
  }
  EXPECT_THROW(sg::make_batch(ds, {}, 28), sg::UsageError);
  EXPECT_THROW(sg::make_batch(ds, {5}, 28), sg::UsageError);
}

TEST(Data, BatcherCoversEachEpochOnce) {
  sg::Batcher b(10, 3, 123);
  std::vector<std::size_t> seen;
  for (int k = 0; k < 10; ++k) {
    auto idx = b.next();
    EXPECT_EQ(idx.size(), 3u);
    seen.insert(seen.end(), idx.begin(), idx.end());
  }
  // First ten draws of three cover each index exactly three times.
  std::vector<std::size_t> counts(10, 0);
  for (std::size_t i : seen) counts[i]++;
  for (std::size_t c : counts) EXPECT_EQ(c, 3u);

  sg::Batcher s1(10, 3, 123);
  sg::Batcher s2(10, 3, 123);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(s1.next(), s2.next());
  EXPECT_THROW(sg::Batcher(4, 5, 1), sg::UsageError);
  EXPECT_THROW(sg::Batcher(4, 0, 1), sg::UsageError);
}

TEST(Data, StandardSeqLens) {
  const auto& lens = sg::standard_seq_lens();
  ASSERT_EQ(lens.size(), 6u);
  for (std::size_t t : lens) EXPECT_EQ(784u % t, 0u);
  EXPECT_TRUE(std::is_sorted(lens.begin(), lens.end()));
}
