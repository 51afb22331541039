#pragma once

// Numerics foundation: error types, seeded random streams, dense storage and
// products, and a small deterministic parallel-for.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace onebit {

using Vector = std::vector<double>;

// invalid-argument maps to std::invalid_argument; the rest get their own types
// so callers (and the CLI exit-code mapping) can tell them apart.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t epoch, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// A seeded, single-consumer random stream.
///
/// The sequence is a pure function of (master_seed, stream_id): the engine is
/// mt19937_64 (fully specified by the standard) and every distribution used by
/// the library is implemented here rather than through <random>'s
/// implementation-defined distribution classes.
class RngStream {
 public:
  explicit RngStream(std::uint64_t master_seed, std::uint64_t stream_id = 0)
      : master_seed_(master_seed),
        stream_id_(stream_id),
        engine_(detail::splitmix64(master_seed ^ detail::splitmix64(stream_id ^ 0x6A09E667F3BCC909ULL))) {}

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via the Marsaglia polar method.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

  /// Uniform integer in [0, n), unbiased (rejection on the top of the range).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return static_cast<std::size_t>(draw % bound);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Child stream for task `index`. Depends only on the parent's identity, never
/// on how many samples the parent has already produced.
inline RngStream derive_stream(const RngStream& parent, std::uint64_t index) {
  const std::uint64_t child =
      detail::splitmix64(detail::splitmix64(parent.stream_id()) + 0xD1B54A32D192ED03ULL * (index + 1));
  return RngStream(parent.master_seed(), child);
}

inline Vector sample_gaussian(RngStream& stream, std::size_t count, double mean, double variance) {
  if (!(variance >= 0.0) || !std::isfinite(variance))
    throw std::invalid_argument("sample_gaussian: variance must be finite and >= 0");
  const double sd = std::sqrt(variance);
  Vector out(count);
  for (auto& v : out) v = mean + sd * stream.gaussian();
  return out;
}

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, Vector entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_)
      throw std::invalid_argument("DenseMatrix: " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                  " needs " + std::to_string(rows_ * cols_) + " entries, got " +
                                  std::to_string(data_.size()));
    for (double v : data_)
      if (!std::isfinite(v)) throw std::invalid_argument("DenseMatrix: non-finite entry");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix id(n, n);
    for (std::size_t i = 0; i < n; ++i) id(i, i) = 1.0;
    return id;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> entries() noexcept { return data_; }
  std::span<const double> entries() const noexcept { return data_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

/// A x
inline Vector matvec(const DenseMatrix& A, std::span<const double> x) {
  if (x.size() != A.cols())
    throw std::invalid_argument("matvec: matrix has " + std::to_string(A.cols()) + " columns, vector has " +
                                std::to_string(x.size()) + " entries");
  Vector out(A.rows(), 0.0);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const auto row = A.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
  return out;
}

/// Aᵀ v
inline Vector matvec_t(const DenseMatrix& A, std::span<const double> v) {
  if (v.size() != A.rows())
    throw std::invalid_argument("matvec_t: matrix has " + std::to_string(A.rows()) + " rows, vector has " +
                                std::to_string(v.size()) + " entries");
  Vector out(A.cols(), 0.0);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const double coeff = v[r];
    if (coeff == 0.0) continue;
    const auto row = A.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += coeff * row[c];
  }
  return out;
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index must
/// write only its own output slot; results are then independent of scheduling.
/// The first exception thrown by any task is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min(threads, count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace onebit
