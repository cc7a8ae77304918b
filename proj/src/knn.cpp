#include "knnshift/knn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace knnshift {

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.squared_distance < b.squared_distance ||
         (a.squared_distance == b.squared_distance && a.index < b.index);
}

// Keeps `best` sorted, closest first, holding at most k entries.
void offer(std::vector<Neighbor>& best, std::size_t k, Neighbor cand) {
  if (best.size() == k) {
    if (!closer(cand, best.back())) return;
    best.pop_back();
  }
  auto pos = std::upper_bound(best.begin(), best.end(), cand, closer);
  best.insert(pos, cand);
}

}  // namespace

NNIndex::NNIndex(PointSet points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  if (points_.empty()) throw InvalidArgument("build_index: empty point set");
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
  build(0, static_cast<std::uint32_t>(order_.size()));
}

std::int32_t NNIndex::build(std::uint32_t begin, std::uint32_t end) {
  const std::size_t d = dim();
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end, -1, -1});
  box_lo_.resize(box_lo_.size() + d);
  box_hi_.resize(box_hi_.size() + d);
  double* lo = box_lo_.data() + id * d;
  double* hi = box_hi_.data() + id * d;
  for (std::size_t j = 0; j < d; ++j) {
    lo[j] = points_[order_[begin]][j];
    hi[j] = lo[j];
  }
  for (std::uint32_t i = begin + 1; i < end; ++i) {
    auto p = points_[order_[i]];
    for (std::size_t j = 0; j < d; ++j) {
      lo[j] = std::min(lo[j], p[j]);
      hi[j] = std::max(hi[j], p[j]);
    }
  }
  if (end - begin <= leaf_size_) return id;

  std::size_t axis = 0;
  double widest = -1.0;
  for (std::size_t j = 0; j < d; ++j) {
    if (hi[j] - lo[j] > widest) {
      widest = hi[j] - lo[j];
      axis = j;
    }
  }
  if (widest <= 0.0) return id;  // all points identical: keep as one leaf

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double NNIndex::box_distance(std::int32_t node, PointView x) const {
  // Summed in coordinate order like squared_distance, so it never exceeds
  // the computed distance to any point inside the box.
  const std::size_t d = dim();
  const double* lo = box_lo_.data() + node * d;
  const double* hi = box_hi_.data() + node * d;
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double t = 0.0;
    if (x[j] < lo[j]) t = x[j] - lo[j];
    else if (x[j] > hi[j]) t = x[j] - hi[j];
    s += t * t;
  }
  return s;
}

void NNIndex::search(std::int32_t node_id, PointView x, std::size_t k,
                     std::vector<Neighbor>& best) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::uint32_t idx = order_[i];
      offer(best, k, Neighbor{idx, squared_distance(x, points_[idx])});
    }
    return;
  }
  const double dl = box_distance(node.left, x);
  const double dr = box_distance(node.right, x);
  const std::int32_t first = dl <= dr ? node.left : node.right;
  const std::int32_t second = dl <= dr ? node.right : node.left;
  const double d_first = std::min(dl, dr), d_second = std::max(dl, dr);
  // Equal distances are still visited: they may hold a tie with a smaller index.
  if (best.size() < k || d_first <= best.back().squared_distance) search(first, x, k, best);
  if (best.size() < k || d_second <= best.back().squared_distance) search(second, x, k, best);
}

void NNIndex::check_query(PointView x, std::size_t k) const {
  require_dim(x, dim(), "knn query");
  if (k < 1 || k > size())
    throw InvalidArgument("knn query: k=" + std::to_string(k) + " out of range [1, " +
                          std::to_string(size()) + "]");
}

void NNIndex::knn_into(PointView x, std::size_t k, std::vector<Neighbor>& out) const {
  check_query(x, k);
  out.clear();
  out.reserve(k + 1);
  search(0, x, k, out);
}

std::vector<Neighbor> NNIndex::knn(PointView x, std::size_t k) const {
  std::vector<Neighbor> out;
  knn_into(x, k, out);
  return out;
}

double NNIndex::knn_radius(PointView x, std::size_t k) const {
  return std::sqrt(knn(x, k).back().squared_distance);
}

std::vector<std::size_t> NNIndex::knn_indices(PointView x, std::size_t k) const {
  const auto nb = knn(x, k);
  std::vector<std::size_t> out(nb.size());
  std::transform(nb.begin(), nb.end(), out.begin(), [](const Neighbor& n) { return n.index; });
  return out;
}

NNIndex build_index(const PointSet& points) { return NNIndex(points); }

std::vector<Neighbor> brute_force_knn(const PointSet& points, PointView x, std::size_t k) {
  require_dim(x, points.dim(), "brute_force_knn");
  if (k < 1 || k > points.size()) throw InvalidArgument("brute_force_knn: k out of range");
  std::vector<Neighbor> all(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) all[i] = {i, squared_distance(x, points[i])};
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
  all.resize(k);
  return all;
}

CatchmentProfile catchment_counts(const NNIndex& source_index, const PointSet& targets,
                                  std::size_t k) {
  if (targets.empty()) throw InvalidArgument("catchment_counts: empty target list");
  if (k < 1 || k > source_index.size())
    throw InvalidArgument("catchment_counts: k=" + std::to_string(k) + " out of range");
  CatchmentProfile prof{std::vector<std::size_t>(source_index.size(), 0), k, targets.size()};
  std::vector<Neighbor> nb;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    source_index.knn_into(targets[j], k, nb);
    for (const auto& n : nb) ++prof.counts[n.index];
  }
#ifndef NDEBUG
  if (source_index.size() * targets.size() <= 4096) {
    const auto check = catchment_counts_by_membership(source_index.points(), targets, k);
    std::size_t total = 0;
    for (auto c : check.counts) total += c;
    // Without ties the two forms coincide; with ties the membership form over-counts.
    if (total == targets.size() * k && check.counts != prof.counts)
      throw NumericalError("catchment_counts: membership cross-check failed");
  }
#endif
  return prof;
}

CatchmentProfile catchment_counts_by_membership(const PointSet& sources, const PointSet& targets,
                                                std::size_t k) {
  if (targets.empty()) throw InvalidArgument("catchment_counts: empty target list");
  CatchmentProfile prof{std::vector<std::size_t>(sources.size(), 0), k, targets.size()};
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const double r2 = brute_force_knn(sources, targets[j], k).back().squared_distance;
    for (std::size_t i = 0; i < sources.size(); ++i)
      if (squared_distance(targets[j], sources[i]) <= r2) ++prof.counts[i];
  }
  return prof;
}

MonteCarloEstimate catchment_volume(const NNIndex& source_index, PointView z, std::size_t k,
                                    const Sampler& q_sampler, std::size_t n_mc,
                                    std::uint64_t seed) {
  require_dim(z, source_index.dim(), "catchment_volume");
  if (n_mc == 0) throw InvalidArgument("catchment_volume: n_mc must be positive");
  Rng rng(seed);
  std::size_t hits = 0;
  std::vector<Neighbor> nb;
  for (std::size_t s = 0; s < n_mc; ++s) {
    const Point x = q_sampler(rng);
    require_dim(x, source_index.dim(), "catchment_volume sampler");
    source_index.knn_into(x, k, nb);
    if (squared_distance(z, x) <= nb.back().squared_distance) ++hits;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(n_mc);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n_mc))};
}

MonteCarloEstimate catchment_volume_uniform_box(const NNIndex& source_index, PointView z,
                                                std::size_t k, double lo, double hi,
                                                std::size_t n_mc, std::uint64_t seed) {
  const std::size_t d = source_index.dim();
  require_dim(z, d, "catchment_volume_uniform_box");
  if (!(hi > lo)) throw InvalidArgument("catchment_volume_uniform_box: empty box");
  if (n_mc == 0) throw InvalidArgument("catchment_volume_uniform_box: n_mc must be positive");
  const double domain_volume = std::pow(hi - lo, static_cast<double>(d));

  double half = (hi - lo);
  if (k < source_index.size()) half = std::max(4.0 * source_index.knn_radius(z, k + 1), 1e-12);

  Rng rng(seed);
  std::vector<Neighbor> nb;
  Point x(d), cube_lo(d), cube_hi(d);
  for (;;) {
    bool whole = true;
    double volume = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      cube_lo[j] = std::max(lo, z[j] - half);
      cube_hi[j] = std::min(hi, z[j] + half);
      volume *= cube_hi[j] - cube_lo[j];
      whole = whole && cube_lo[j] == lo && cube_hi[j] == hi;
    }
    std::size_t hits = 0;
    bool touches_shell = false;
    for (std::size_t s = 0; s < n_mc; ++s) {
      for (std::size_t j = 0; j < d; ++j) x[j] = cube_lo[j] + (cube_hi[j] - cube_lo[j]) * uniform01(rng);
      source_index.knn_into(x, k, nb);
      if (squared_distance(z, x) > nb.back().squared_distance) continue;
      ++hits;
      for (std::size_t j = 0; j < d && !touches_shell; ++j) {
        const bool open_hi = z[j] + half < hi, open_lo = z[j] - half > lo;
        touches_shell = (open_hi && x[j] - z[j] > 0.5 * half) || (open_lo && z[j] - x[j] > 0.5 * half);
      }
    }
    if (touches_shell && !whole) {
      half *= 2.0;
      continue;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(n_mc);
    const double q = volume / domain_volume;
    return {q * p, q * std::sqrt(p * (1.0 - p) / static_cast<double>(n_mc))};
  }
}

}  // namespace knnshift
