#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <fstream>

#include "onebit/data.hpp"
#include "test_util.hpp"

using namespace onebit;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

/// Minimal IDX writer used only here.
std::vector<std::uint8_t> idx_images(std::uint32_t count, std::uint32_t h, std::uint32_t w,
                                     const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x00000803);
  put_be32(out, count);
  put_be32(out, h);
  put_be32(out, w);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::string write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  const auto path = (testutil::scratch_dir("idx_" + name) / (name + ".idx")).string();
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                              static_cast<std::streamsize>(bytes.size()));
  return path;
}

}  // namespace

TEST(SampleSparse, ExactSupportAndRange) {
  RngStream s(601, 0);
  SparseSpec spec;
  for (int t = 0; t < 200; ++t) {
    const auto x = sample_sparse(spec, s);
    std::size_t nnz = 0;
    for (double v : x)
      if (v != 0.0) {
        ++nnz;
        EXPECT_GE(v, 0.5);
        EXPECT_LE(v, 1.0);
      }
    EXPECT_EQ(nnz, 4u);
  }
}

TEST(SampleSparse, DenseNormalized) {
  RngStream s(602, 0);
  const SparseSpec spec{16, 16, ValueDist::uniform_01, true};
  const auto x = sample_sparse(spec, s);
  EXPECT_NEAR(norm2(x), 1.0, 1e-12);
  for (double v : x) EXPECT_NE(v, 0.0);
}

TEST(SampleSparse, InclusionFrequencyIsUniform) {
  RngStream s(603, 0);
  const SparseSpec spec{64, 4, ValueDist::uniform_half_one, false};
  const int N = 10000;
  std::vector<int> hits(64, 0);
  for (int t = 0; t < N; ++t) {
    const auto x = sample_sparse(spec, s);
    for (int i = 0; i < 64; ++i) hits[i] += x[i] != 0.0;
  }
  const double p = 4.0 / 64.0, sd = std::sqrt(N * p * (1 - p));
  for (int h : hits) EXPECT_NEAR(h, N * p, 3.0 * sd + 1.0);
}

TEST(SampleSparse, DeterministicPerStream) {
  RngStream a(604, 2), b(604, 2);
  const SparseSpec spec;
  EXPECT_EQ(sample_sparse(spec, a), sample_sparse(spec, b));
  EXPECT_THROW(sample_sparse(SparseSpec{4, 5}, a), std::invalid_argument);
  EXPECT_THROW(sample_sparse(SparseSpec{4, 0}, a), std::invalid_argument);
}

TEST(NormalizeUnit, Values) {
  const auto v = normalize_unit(Vector{3, 4});
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
  EXPECT_EQ(normalize_unit(Vector{0, 1}), (Vector{0, 1}));
  EXPECT_THROW(normalize_unit(Vector{0, 0}), DegenerateInput);
  RngStream s(605, 0);
  for (int t = 0; t < 20; ++t) EXPECT_NEAR(norm2(normalize_unit(sample_gaussian(s, 7, 0.0, 9.0))), 1.0, 1e-12);
}

TEST(ReadIdx, HandCraftedFixture) {
  const auto path = write_bytes("two", idx_images(2, 2, 2, {0, 255, 255, 0, 51, 0, 0, 255}));
  const auto ds = read_idx(path);
  EXPECT_EQ(ds.count, 2u);
  EXPECT_EQ(ds.height, 2u);
  EXPECT_EQ(ds.width, 2u);
  EXPECT_EQ(ds.image(0)[0], 0.0);
  EXPECT_EQ(ds.image(0)[1], 1.0);
  EXPECT_DOUBLE_EQ(ds.image(1)[0], 0.2);
  const auto M = ds.as_matrix();
  EXPECT_EQ(M.rows(), 2u);
  EXPECT_EQ(M(1, 3), 1.0);
}

TEST(ReadIdx, RoundTripAgainstWriter) {
  RngStream s(606, 0);
  std::vector<std::uint8_t> pix(5 * 3 * 4);
  for (auto& p : pix) p = static_cast<std::uint8_t>(s.uniform_index(256));
  const auto ds = read_idx(write_bytes("rt", idx_images(5, 3, 4, pix)));
  ASSERT_EQ(ds.pixels.size(), pix.size());
  for (std::size_t i = 0; i < pix.size(); ++i) EXPECT_EQ(std::lround(ds.pixels[i] * 255.0), pix[i]);
}

TEST(ReadIdx, ErrorsCarryByteOffsets) {
  auto expect_offset = [](const std::string& path, const std::string& needle) {
    try {
      read_idx(path);
      FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  auto bad_magic = idx_images(1, 1, 1, {7});
  bad_magic[3] = 0x01;
  expect_offset(write_bytes("magic", bad_magic), "byte offset 0");
  expect_offset(write_bytes("trunc", idx_images(2, 2, 2, {1, 2, 3})), "truncated payload at byte offset 19");
  expect_offset(write_bytes("extra", idx_images(1, 2, 2, {1, 2, 3, 4, 5})), "dimension product");
  std::vector<std::uint8_t> short_header{0, 0, 8, 3, 0, 0};
  expect_offset(write_bytes("header", short_header), "truncated header at byte offset 4");
  EXPECT_THROW(read_idx("/nonexistent/file.idx"), ParseError);
}

TEST(ReadIdxLabels, Basic) {
  std::vector<std::uint8_t> bytes;
  put_be32(bytes, 0x00000801);
  put_be32(bytes, 3);
  bytes.insert(bytes.end(), {7, 1, 9});
  const auto labels = read_idx_labels(write_bytes("labels", bytes));
  EXPECT_EQ(labels, (std::vector<std::uint8_t>{7, 1, 9}));
  EXPECT_THROW(read_idx(write_bytes("labels_as_images", bytes)), ParseError);
}
