#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "knnshift/common.hpp"

namespace knnshift {

struct Neighbor {
  std::size_t index;
  double squared_distance;
};

/// Exact Euclidean k-nearest-neighbour index over a fixed point set.
///
/// Built once, immutable afterwards; concurrent queries are safe. Ties in
/// distance are broken by ascending point index, so every query has a unique
/// answer and matches a brute-force linear scan bit for bit.
class NNIndex {
 public:
  explicit NNIndex(PointSet points, std::size_t leaf_size = 12);

  std::size_t size() const { return points_.size(); }
  std::size_t dim() const { return points_.dim(); }
  const PointSet& points() const { return points_; }

  /// The k nearest points, closest first (ties by smaller index).
  std::vector<Neighbor> knn(PointView x, std::size_t k) const;

  /// Allocation-free variant; `out` is resized to k.
  void knn_into(PointView x, std::size_t k, std::vector<Neighbor>& out) const;

  /// k-th smallest distance from x to the indexed points.
  double knn_radius(PointView x, std::size_t k) const;

  std::vector<std::size_t> knn_indices(PointView x, std::size_t k) const;

 private:
  struct Node {
    // Leaves hold [begin, end) into order_; internal nodes hold children.
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, PointView x, std::size_t k, std::vector<Neighbor>& heap) const;
  double box_distance(std::int32_t node, PointView x) const;
  void check_query(PointView x, std::size_t k) const;

  PointSet points_;
  std::size_t leaf_size_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::vector<double> box_lo_, box_hi_;  // per-node bounding boxes, dim() entries each
};

NNIndex build_index(const PointSet& points);

/// Linear-scan reference used by tests and small-instance cross-checks.
std::vector<Neighbor> brute_force_knn(const PointSet& points, PointView x, std::size_t k);

/// M*_k per source point: how many targets count it among their k nearest
/// sources. counts sum to m * k exactly.
struct CatchmentProfile {
  std::vector<std::size_t> counts;
  std::size_t k = 0;
  std::size_t m = 0;
};

CatchmentProfile catchment_counts(const NNIndex& source_index, const PointSet& targets,
                                  std::size_t k);

/// Membership form 1{|x - X*_j| <= tau_k(X*_j)} evaluated by brute force.
/// Equals catchment_counts whenever distances have no ties.
CatchmentProfile catchment_counts_by_membership(const PointSet& sources, const PointSet& targets,
                                                std::size_t k);

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Q(A_k(z)) with A_k(z) = {x : |z - x| <= tau_k(x)}, by drawing x ~ Q.
MonteCarloEstimate catchment_volume(const NNIndex& source_index, PointView z, std::size_t k,
                                    const Sampler& q_sampler, std::size_t n_mc,
                                    std::uint64_t seed);

/// Q(A_k(z)) for Q uniform on the box [lo, hi]^d, sampling only a cube around
/// z that is grown until it encloses the catchment. Needed when the catchment
/// is a tiny fraction of the domain.
MonteCarloEstimate catchment_volume_uniform_box(const NNIndex& source_index, PointView z,
                                                std::size_t k, double lo, double hi,
                                                std::size_t n_mc, std::uint64_t seed);

}  // namespace knnshift
