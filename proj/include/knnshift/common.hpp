#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace knnshift {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or configuration violation (bad sizes, k out of range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a trustworthy answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Local least-squares system too ill-conditioned to solve.
class DegenerateFit : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// ---------------------------------------------------------------------------
// Points
// ---------------------------------------------------------------------------

using Point = std::vector<double>;
using PointView = std::span<const double>;

/// Row-major set of points sharing one dimension.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw InvalidArgument("PointSet: dimension must be positive");
  }
  PointSet(std::size_t dim, std::vector<double> flat);

  /// Builds a set from a list of points; all must share one dimension.
  static PointSet from_points(const std::vector<Point>& points);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return size() == 0; }

  PointView operator[](std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<double> mutable_row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  void push_back(PointView p);
  void reserve(std::size_t n) { data_.reserve(n * dim_); }

  const std::vector<double>& flat() const { return data_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

inline double squared_distance(PointView a, PointView b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

void require_dim(PointView x, std::size_t dim, const char* where);

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

/// Mixes a base seed with stream labels into an independent substream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

/// Stable 64-bit hash of a label (FNV-1a), used to key per-method substreams.
std::uint64_t label_hash(const std::string& label);

/// Uniform on the open interval (0, 1) from 53 random bits.
inline double uniform01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Rng& rng);

/// Draws a point from a target law. Used for Monte Carlo integrals over Q.
using Sampler = std::function<Point(Rng&)>;

// ---------------------------------------------------------------------------
// Parallel loops
// ---------------------------------------------------------------------------

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware).
/// Results must be written to per-index slots so the reduction order is fixed.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

void set_default_threads(unsigned threads);
unsigned default_threads();

}  // namespace knnshift
