#pragma once

// Signal sources: synthetic sparse vectors and IDX image files.

#include <array>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onebit/core.hpp"

namespace onebit {

enum class ValueDist { uniform_01, uniform_half_one };

inline ValueDist value_dist_from_name(std::string_view name) {
  if (name == "uniform_01") return ValueDist::uniform_01;
  if (name == "uniform_half_one") return ValueDist::uniform_half_one;
  throw std::invalid_argument("unknown value distribution '" + std::string(name) + "'");
}

inline std::string_view value_dist_name(ValueDist d) {
  return d == ValueDist::uniform_01 ? "uniform_01" : "uniform_half_one";
}

struct SparseSpec {
  std::size_t n = 64;
  std::size_t k = 4;
  ValueDist value_dist = ValueDist::uniform_half_one;
  bool normalize = false;

  void validate() const {
    if (k < 1 || k > n) throw std::invalid_argument("SparseSpec: need 1 <= k <= n");
  }
};

inline Vector normalize_unit(std::span<const double> x) {
  const double nx = norm2(x);
  if (nx == 0.0) throw DegenerateInput("normalize_unit: zero vector");
  Vector out(x.begin(), x.end());
  for (double& v : out) v /= nx;
  return out;
}

/// k-sparse vector: support uniform without replacement (partial Fisher-Yates),
/// magnitudes from the value law.
inline Vector sample_sparse(const SparseSpec& spec, RngStream& stream) {
  spec.validate();
  std::vector<std::size_t> idx(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < spec.k; ++i) std::swap(idx[i], idx[i + stream.uniform_index(spec.n - i)]);
  Vector x(spec.n, 0.0);
  for (std::size_t i = 0; i < spec.k; ++i) {
    const double u = stream.uniform();
    double value = spec.value_dist == ValueDist::uniform_half_one ? 0.5 + 0.5 * u : u;
    // uniform_01 can return exactly 0; keep the support size exact.
    if (value == 0.0) value = 0x1.0p-53;
    x[idx[i]] = value;
  }
  if (spec.normalize) return normalize_unit(x);
  return x;
}

inline DenseMatrix sample_sparse_dataset(const SparseSpec& spec, std::size_t count, RngStream& stream) {
  DenseMatrix data(count, spec.n);
  for (std::size_t r = 0; r < count; ++r) {
    const Vector x = sample_sparse(spec, stream);
    std::copy(x.begin(), x.end(), data.row(r).begin());
  }
  return data;
}

struct ImageDataset {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Vector pixels;  // [0,1], image-major then row-major

  std::span<const double> image(std::size_t i) const {
    const std::size_t stride = height * width;
    return {pixels.data() + i * stride, stride};
  }

  /// One image per row.
  DenseMatrix as_matrix() const { return DenseMatrix(count, height * width, pixels); }
};

namespace detail {

inline std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::string& path) {
  if (offset + 4 > bytes.size())
    throw ParseError(path + ": truncated header at byte offset " + std::to_string(offset));
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void check_payload(const std::vector<std::uint8_t>& bytes, std::size_t header, std::size_t expected,
                          const std::string& path) {
  const std::size_t payload = bytes.size() - header;
  if (payload < expected)
    throw ParseError(path + ": truncated payload at byte offset " + std::to_string(bytes.size()) + " (expected " +
                     std::to_string(expected) + " data bytes, found " + std::to_string(payload) + ")");
  if (payload > expected)
    throw ParseError(path + ": dimension product " + std::to_string(expected) + " does not match payload length " +
                     std::to_string(payload) + " (extra data at byte offset " + std::to_string(header + expected) +
                     ")");
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// IDX image file (unsigned bytes, 3 dimensions); pixels scaled by 1/255.
inline ImageDataset read_idx(const std::string& path) {
  const auto bytes = detail::read_all_bytes(path);
  const auto magic = detail::read_be32(bytes, 0, path);
  if (magic != kIdxImageMagic)
    throw ParseError(path + ": bad magic at byte offset 0 (expected 0x00000803 for images, got " +
                     std::to_string(magic) + ")");
  ImageDataset ds;
  ds.count = detail::read_be32(bytes, 4, path);
  ds.height = detail::read_be32(bytes, 8, path);
  ds.width = detail::read_be32(bytes, 12, path);
  const std::size_t header = 16;
  detail::check_payload(bytes, header, ds.count * ds.height * ds.width, path);
  ds.pixels.resize(ds.count * ds.height * ds.width);
  for (std::size_t i = 0; i < ds.pixels.size(); ++i) ds.pixels[i] = static_cast<double>(bytes[header + i]) / 255.0;
  return ds;
}

/// IDX label file (unsigned bytes, 1 dimension).
inline std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
  const auto bytes = detail::read_all_bytes(path);
  const auto magic = detail::read_be32(bytes, 0, path);
  if (magic != kIdxLabelMagic)
    throw ParseError(path + ": bad magic at byte offset 0 (expected 0x00000801 for labels, got " +
                     std::to_string(magic) + ")");
  const std::size_t count = detail::read_be32(bytes, 4, path);
  detail::check_payload(bytes, 8, count, path);
  return {bytes.begin() + 8, bytes.end()};
}

}  // namespace onebit
