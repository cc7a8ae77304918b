#pragma once

#include <cstddef>
#include <vector>

#include "knnshift/common.hpp"

namespace knnshift {

/// Multi-indices of total degree <= order in `dim` variables, graded
/// lexicographic order. The first index is always the zero tuple, so the
/// first coefficient of a local fit is the intercept.
class MultiIndexBasis {
 public:
  MultiIndexBasis(std::size_t dim, unsigned order);

  std::size_t dim() const { return dim_; }
  unsigned order() const { return order_; }
  std::size_t size() const { return indices_.size(); }  // K*
  const std::vector<std::vector<unsigned>>& indices() const { return indices_; }

  /// sum_{i=1}^{L} i * binom(d+i-1, i): degree-weighted count of monomials.
  std::size_t weighted_degree_count() const { return weighted_count_; }

 private:
  std::size_t dim_;
  unsigned order_;
  std::vector<std::vector<unsigned>> indices_;
  std::size_t weighted_count_ = 0;
};

MultiIndexBasis enumerate_multi_indices(std::size_t dim, unsigned order);

/// zeta(x, z): component j is prod_i (z_i - x_i)^{index_j[i]}.
std::vector<double> monomial_vector(const MultiIndexBasis& basis, PointView x, PointView z);

/// Same as monomial_vector but with (z - x) / scale in place of z - x;
/// writes into `out` (size K*) to avoid allocations in hot loops.
void monomial_vector_scaled(const MultiIndexBasis& basis, PointView x, PointView z, double scale,
                            std::span<double> out);

/// Smallest k for which the local polynomial bias guarantee holds:
/// (2D + 1) K* + 1.
std::size_t min_neighbours(const MultiIndexBasis& basis);

std::size_t binomial(std::size_t n, std::size_t k);

}  // namespace knnshift
