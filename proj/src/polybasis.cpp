#include "knnshift/polybasis.hpp"

#include <string>

namespace knnshift {

std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

namespace {

// Appends every tuple of length `dim` with coordinate sum exactly `degree`,
// first coordinate descending (lexicographic order within the degree).
void append_degree(std::size_t dim, unsigned degree, std::vector<unsigned>& prefix,
                   std::vector<std::vector<unsigned>>& out) {
  if (prefix.size() + 1 == dim) {
    prefix.push_back(degree);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  for (unsigned first = degree + 1; first-- > 0;) {
    prefix.push_back(first);
    append_degree(dim, degree - first, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

MultiIndexBasis::MultiIndexBasis(std::size_t dim, unsigned order) : dim_(dim), order_(order) {
  if (dim == 0) throw InvalidArgument("enumerate_multi_indices: dimension must be >= 1");
  std::vector<unsigned> prefix;
  prefix.reserve(dim);
  for (unsigned deg = 0; deg <= order; ++deg) append_degree(dim, deg, prefix, indices_);
  for (unsigned i = 1; i <= order; ++i) weighted_count_ += i * binomial(dim + i - 1, i);
}

MultiIndexBasis enumerate_multi_indices(std::size_t dim, unsigned order) {
  return MultiIndexBasis(dim, order);
}

void monomial_vector_scaled(const MultiIndexBasis& basis, PointView x, PointView z, double scale,
                            std::span<double> out) {
  const std::size_t d = basis.dim();
  require_dim(x, d, "monomial_vector");
  require_dim(z, d, "monomial_vector");
  if (out.size() != basis.size()) throw InvalidArgument("monomial_vector: output size != K*");
  const auto& idx = basis.indices();
  for (std::size_t j = 0; j < idx.size(); ++j) {
    double v = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double u = (z[i] - x[i]) / scale;
      for (unsigned p = 0; p < idx[j][i]; ++p) v *= u;
    }
    out[j] = v;
  }
}

std::vector<double> monomial_vector(const MultiIndexBasis& basis, PointView x, PointView z) {
  std::vector<double> out(basis.size());
  monomial_vector_scaled(basis, x, z, 1.0, out);
  return out;
}

std::size_t min_neighbours(const MultiIndexBasis& basis) {
  return (2 * basis.weighted_degree_count() + 1) * basis.size() + 1;
}

}  // namespace knnshift
