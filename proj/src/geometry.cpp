#include "knnshift/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "knnshift/format.hpp"

namespace knnshift {

double BoundingBox::volume() const {
  double v = 1.0;
  for (std::size_t j = 0; j < lo.size(); ++j) v *= hi[j] - lo[j];
  return v;
}

bool Domain::contains(PointView x) const {
  require_dim(x, dim(), "contains");
  return contains_impl(x);
}

DistanceBracket Domain::boundary_distance(PointView x) const {
  if (!contains(x)) throw InvalidArgument("boundary_distance: point " + format_point(x) +
                                          " is outside the " + kind() + " domain");
  DistanceBracket b = distance_impl(x);
  b.lower = std::max(0.0, b.lower);
  b.upper = std::max(b.lower, b.upper);
  return b;
}

namespace {

class Box final : public Domain {
 public:
  Box(Point lo, Point hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.empty() || lo_.size() != hi_.size()) throw InvalidArgument("box: bad corners");
    for (std::size_t j = 0; j < lo_.size(); ++j)
      if (!(hi_[j] > lo_[j])) throw InvalidArgument("box: empty side");
  }
  std::size_t dim() const override { return lo_.size(); }
  BoundingBox bounding_box() const override { return {lo_, hi_}; }
  std::string kind() const override { return "box"; }

 protected:
  bool contains_impl(PointView x) const override {
    for (std::size_t j = 0; j < lo_.size(); ++j)
      if (x[j] < lo_[j] || x[j] > hi_[j]) return false;
    return true;
  }
  DistanceBracket distance_impl(PointView x) const override {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < lo_.size(); ++j) d = std::min({d, x[j] - lo_[j], hi_[j] - x[j]});
    return {d, d};
  }

 private:
  Point lo_, hi_;
};

class Ball final : public Domain {
 public:
  Ball(Point c, double r) : c_(std::move(c)), r_(r) {
    if (c_.empty() || !(r > 0.0)) throw InvalidArgument("ball: bad center or radius");
  }
  std::size_t dim() const override { return c_.size(); }
  BoundingBox bounding_box() const override {
    BoundingBox b{c_, c_};
    for (std::size_t j = 0; j < c_.size(); ++j) {
      b.lo[j] -= r_;
      b.hi[j] += r_;
    }
    return b;
  }
  std::string kind() const override { return "ball"; }

 protected:
  bool contains_impl(PointView x) const override { return squared_distance(x, c_) <= r_ * r_; }
  DistanceBracket distance_impl(PointView x) const override {
    const double d = r_ - std::sqrt(squared_distance(x, c_));
    return {d, d};
  }

 private:
  Point c_;
  double r_;
};

class Polytope final : public Domain {
 public:
  Polytope(std::vector<Point> normals, std::vector<double> offsets, BoundingBox box)
      : a_(std::move(normals)), b_(std::move(offsets)), box_(std::move(box)) {
    if (a_.empty() || a_.size() != b_.size()) throw InvalidArgument("polytope: bad halfspaces");
    for (const auto& row : a_) {
      if (row.size() != box_.lo.size()) throw InvalidArgument("polytope: normal dimension");
      double nn = 0.0;
      for (double v : row) nn += v * v;
      if (!(nn > 0.0)) throw InvalidArgument("polytope: zero normal");
      norms_.push_back(std::sqrt(nn));
    }
  }
  std::size_t dim() const override { return box_.lo.size(); }
  BoundingBox bounding_box() const override { return box_; }
  std::string kind() const override { return "polytope"; }

 protected:
  double slack(std::size_t i, PointView x) const {
    double s = b_[i];
    for (std::size_t j = 0; j < x.size(); ++j) s -= a_[i][j] * x[j];
    return s / norms_[i];
  }
  bool contains_impl(PointView x) const override {
    for (std::size_t i = 0; i < a_.size(); ++i)
      if (slack(i, x) < 0.0) return false;
    return true;
  }
  // Convex polytope: the nearest complement point lies across the closest facet plane.
  DistanceBracket distance_impl(PointView x) const override {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a_.size(); ++i) d = std::min(d, slack(i, x));
    return {d, d};
  }

 private:
  std::vector<Point> a_;
  std::vector<double> b_;
  std::vector<double> norms_;
  BoundingBox box_;
};

class ParabolaSubgraph final : public Domain {
 public:
  std::size_t dim() const override { return 2; }
  BoundingBox bounding_box() const override { return {{0.0, 0.0}, {1.0, 1.0}}; }
  std::string kind() const override { return "parabola_subgraph"; }

 protected:
  bool contains_impl(PointView p) const override {
    return p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= p[0] * p[0];
  }
  DistanceBracket distance_impl(PointView p) const override {
    const double flat = std::min(p[1], 1.0 - p[0]);  // bottom edge, right edge
    const DistanceBracket curve = parabola_curve_distance(p[0], p[1]);
    return {std::min(flat, curve.lower), std::min(flat, curve.upper)};
  }
};

class RingUnion final : public Domain {
 public:
  RingUnion(std::size_t k_max, double gap) {
    if (k_max == 0 || !(gap > 0.0)) throw InvalidArgument("ring_union: need k_max >= 1, gap > 0");
    a_.resize(k_max + 1);
    b_.resize(k_max + 1);
    for (std::size_t k = 0; k <= k_max; ++k) a_[k] = 1.0 / static_cast<double>(k + 1);
    for (std::size_t k = 1; k <= k_max; ++k) {
      b_[k] = a_[k - 1] - gap / std::pow(static_cast<double>(k + 1), 4);
      if (!(b_[k] > a_[k])) throw InvalidArgument("ring_union: gap too large, ring is empty");
    }
  }
  std::size_t dim() const override { return 2; }
  BoundingBox bounding_box() const override { return {{-1.0, -1.0}, {1.0, 1.0}}; }
  std::string kind() const override { return "ring_union"; }

 protected:
  // Index of the ring holding radius r, or 0 when r falls in a gap or hole.
  std::size_t ring_of(double r) const {
    const std::size_t k_max = a_.size() - 1;
    if (r <= 0.0) return 0;
    const double guess = std::floor(1.0 / r) - 1.0;
    const auto base = static_cast<std::ptrdiff_t>(std::clamp(guess, 1.0, static_cast<double>(k_max)));
    for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(1, base - 1);
         k <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k_max), base + 1); ++k)
      if (r >= a_[k] && r <= b_[k]) return static_cast<std::size_t>(k);
    return 0;
  }
  bool contains_impl(PointView p) const override { return ring_of(std::hypot(p[0], p[1])) != 0; }
  DistanceBracket distance_impl(PointView p) const override {
    const double r = std::hypot(p[0], p[1]);
    const std::size_t k = ring_of(r);
    const double d = std::min(r - a_[k], b_[k] - r);
    return {d, d};
  }

 private:
  std::vector<double> a_, b_;
};

class Union final : public Domain {
 public:
  explicit Union(std::vector<DomainPtr> parts) : parts_(std::move(parts)) {
    if (parts_.empty()) throw InvalidArgument("union: no parts");
    for (const auto& p : parts_)
      if (!p || p->dim() != parts_.front()->dim()) throw InvalidArgument("union: dimension mismatch");
    box_ = parts_.front()->bounding_box();
    for (const auto& p : parts_) {
      const auto b = p->bounding_box();
      for (std::size_t j = 0; j < box_.lo.size(); ++j) {
        box_.lo[j] = std::min(box_.lo[j], b.lo[j]);
        box_.hi[j] = std::max(box_.hi[j], b.hi[j]);
      }
    }
  }
  std::size_t dim() const override { return box_.lo.size(); }
  BoundingBox bounding_box() const override { return box_; }
  std::string kind() const override { return "union"; }

 protected:
  bool contains_impl(PointView x) const override {
    return std::any_of(parts_.begin(), parts_.end(), [&](const DomainPtr& p) { return p->contains(x); });
  }
  // Lower: a ball inside any part is inside the union. Upper: the union sits
  // inside its bounding box.
  DistanceBracket distance_impl(PointView x) const override {
    double lower = 0.0;
    for (const auto& p : parts_)
      if (p->contains(x)) lower = std::max(lower, p->boundary_distance(x).lower);
    double upper = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < box_.lo.size(); ++j)
      upper = std::min({upper, x[j] - box_.lo[j], box_.hi[j] - x[j]});
    return {lower, std::max(lower, upper)};
  }

 private:
  std::vector<DomainPtr> parts_;
  BoundingBox box_;
};

}  // namespace

DomainPtr make_box(Point lo, Point hi) { return std::make_shared<Box>(std::move(lo), std::move(hi)); }
DomainPtr make_unit_box(std::size_t dim) { return make_box(Point(dim, 0.0), Point(dim, 1.0)); }
DomainPtr make_ball(Point center, double radius) {
  return std::make_shared<Ball>(std::move(center), radius);
}
DomainPtr make_polytope(std::vector<Point> normals, std::vector<double> offsets, BoundingBox box) {
  return std::make_shared<Polytope>(std::move(normals), std::move(offsets), std::move(box));
}
DomainPtr make_parabola_subgraph() { return std::make_shared<ParabolaSubgraph>(); }
DomainPtr make_ring_union(std::size_t k_max, double gap) {
  return std::make_shared<RingUnion>(k_max, gap);
}
DomainPtr make_union(std::vector<DomainPtr> parts) { return std::make_shared<Union>(std::move(parts)); }

DistanceBracket parabola_curve_distance(double x, double y) {
  // Stationary points of |(t, t^2) - (x, y)|^2 are roots of
  // p(t) = 2t^3 + (1 - 2y) t - x; the minimum over [0, 1] is at one of them or
  // at an endpoint. Each root is bracketed by bisection on a monotone piece.
  auto dist = [&](double t) { return std::hypot(t - x, t * t - y); };
  auto poly = [&](double t) { return (2.0 * t * t + (1.0 - 2.0 * y)) * t - x; };
  constexpr double kSpeed = 2.2360679774997898;  // max |c'(t)| = sqrt(5) on [0, 1]

  DistanceBracket best{std::min(dist(0.0), dist(1.0)), std::min(dist(0.0), dist(1.0))};
  std::vector<double> cuts{0.0};
  if (1.0 - 2.0 * y < 0.0) {
    const double tc = std::sqrt((2.0 * y - 1.0) / 6.0);
    if (tc < 1.0) cuts.push_back(tc);
  }
  cuts.push_back(1.0);
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    double lo = cuts[s], hi = cuts[s + 1];
    double plo = poly(lo), phi = poly(hi);
    if ((plo > 0.0 && phi > 0.0) || (plo < 0.0 && phi < 0.0)) continue;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double pm = poly(mid);
      if ((pm <= 0.0) == (plo <= 0.0)) {
        lo = mid;
        plo = pm;
      } else {
        hi = mid;
      }
    }
    const double mid = 0.5 * (lo + hi);
    const double f = dist(mid);
    best.upper = std::min(best.upper, f);
    best.lower = std::min(best.lower, f - kSpeed * 0.5 * (hi - lo));
  }
  best.lower = std::max(0.0, best.lower);
  return best;
}

namespace {

// `keep` holds ownership when the caller hands over a shared pointer.
Sampler rejection_sampler(const Domain* domain, DomainPtr keep) {
  const BoundingBox box = domain->bounding_box();
  return [domain, keep = std::move(keep), box](Rng& rng) {
    Point x(box.lo.size());
    for (int attempt = 0; attempt < 10'000'000; ++attempt) {
      for (std::size_t j = 0; j < x.size(); ++j)
        x[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * uniform01(rng);
      if (domain->contains(x)) return x;
    }
    throw NumericalError("uniform_sampler: rejection sampling failed for " + domain->kind());
  };
}

}  // namespace

Sampler uniform_sampler(const DomainPtr& domain) {
  if (!domain) throw InvalidArgument("uniform_sampler: null domain");
  return rejection_sampler(domain.get(), domain);
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::bounded: return "bounded";
    case Verdict::diverging: return "diverging";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

Verdict classify_growth(const std::vector<double>& v, const std::vector<double>& se) {
  const std::size_t m = v.size();
  if (m < 3 || se.size() != m) return Verdict::inconclusive;
  bool flat_tail = true;
  for (std::size_t j = m - 3; j + 1 < m; ++j)
    if (v[j + 1] - v[j] > 3.0 * std::hypot(se[j], se[j + 1])) flat_tail = false;
  if (flat_tail) return Verdict::bounded;
  if (v.front() > 0.0 && v.back() / v.front() > 2.0 &&
      v.back() - v.front() > 3.0 * std::hypot(se.front(), se.back()))
    return Verdict::diverging;
  return Verdict::inconclusive;
}

std::string ConditionReport::to_csv() const {
  std::ostringstream os;
  os << "L,I,stderr\n";
  for (std::size_t i = 0; i < L_grid.size(); ++i)
    os << format_double(L_grid[i]) << ',' << format_double(I_values[i]) << ','
       << format_double(mc_std_errors[i]) << '\n';
  return os.str();
}

std::string TubeReport::to_csv() const {
  std::ostringstream os;
  os << "eps,ratio,stderr\n";
  for (std::size_t i = 0; i < eps_grid.size(); ++i)
    os << format_double(eps_grid[i]) << ',' << format_double(ratios[i]) << ','
       << format_double(std_errors[i]) << '\n';
  return os.str();
}

namespace {
constexpr std::size_t kChunk = 4096;
}

std::vector<Point> draw_checked(const Domain& domain, const Sampler& q_sampler, std::size_t n_mc,
                                std::uint64_t seed) {
  std::vector<Point> out(n_mc);
  const std::size_t chunks = (n_mc + kChunk - 1) / kChunk;
  parallel_for(chunks, 0, [&](std::size_t c) {
    Rng rng(derive_seed(seed, c));
    const std::size_t end = std::min(n_mc, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      out[i] = q_sampler(rng);
      if (!domain.contains(out[i]))
        throw InvalidArgument("sampler emitted point " + format_point(out[i]) + " outside the " +
                              domain.kind() + " domain");
    }
  });
  return out;
}

ConditionReport check_condition_A(const Domain& domain, const Sampler& q_sampler,
                                  const std::vector<double>& L_grid, std::size_t n_mc,
                                  std::uint64_t seed) {
  if (L_grid.empty()) throw InvalidArgument("check_condition_A: empty L grid");
  for (std::size_t i = 0; i < L_grid.size(); ++i)
    if (!(L_grid[i] > 0.0) || (i > 0 && !(L_grid[i] > L_grid[i - 1])))
      throw InvalidArgument("check_condition_A: L grid must be positive and increasing");
  if (n_mc < 1000) throw InvalidArgument("check_condition_A: n_mc must be >= 1000");

  const auto draws = draw_checked(domain, q_sampler, n_mc, seed);
  const double d = static_cast<double>(domain.dim());
  std::vector<double> delta_pow(n_mc);
  for (std::size_t i = 0; i < n_mc; ++i) delta_pow[i] = std::pow(domain.delta(draws[i]), d);

  ConditionReport rep;
  rep.L_grid = L_grid;
  for (double L : L_grid) {
    const double scale = std::pow(L, 1.0 / d);
    double s = 0.0, s2 = 0.0;
    for (double dp : delta_pow) {
      const double v = scale * std::exp(-L * dp);
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(n_mc);
    const double mean = s / n;
    const double var = std::max(0.0, s2 / n - mean * mean);
    rep.I_values.push_back(mean);
    rep.mc_std_errors.push_back(std::sqrt(var / (n - 1.0)));
  }
  rep.verdict = classify_growth(rep.I_values, rep.mc_std_errors);
  return rep;
}

BallRatioReport check_condition_X2(const Domain& domain, std::size_t n_centers,
                                   const std::vector<double>& r_grid, std::size_t n_mc,
                                   std::uint64_t seed, const std::vector<Point>& centers) {
  if (r_grid.empty()) throw InvalidArgument("check_condition_X2: empty radius grid");
  for (double r : r_grid)
    if (!(r > 0.0)) throw InvalidArgument("check_condition_X2: radii must be positive");
  if (n_mc == 0) throw InvalidArgument("check_condition_X2: n_mc must be positive");

  std::vector<Point> pts = centers;
  if (pts.empty()) {
    if (n_centers == 0) throw InvalidArgument("check_condition_X2: no centers");
    pts = draw_checked(domain, rejection_sampler(&domain, nullptr), n_centers, derive_seed(seed, 0));
  }
  for (const auto& c : pts)
    if (!domain.contains(c)) throw InvalidArgument("check_condition_X2: center " + format_point(c) + " outside domain");

  const std::size_t d = domain.dim();
  struct Cell {
    double ratio = 1.0, se = 0.0, r = 0.0;
  };
  std::vector<Cell> best(pts.size());
  parallel_for(pts.size(), 0, [&](std::size_t ci) {
    Rng rng(derive_seed(seed, 1, ci));
    Point x(d), dir(d);
    Cell cell{2.0, 0.0, 0.0};
    for (double r : r_grid) {
      std::size_t hits = 0;
      for (std::size_t s = 0; s < n_mc; ++s) {
        double nn = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dir[j] = standard_normal(rng);
          nn += dir[j] * dir[j];
        }
        const double rad = r * std::pow(uniform01(rng), 1.0 / static_cast<double>(d)) / std::sqrt(nn);
        for (std::size_t j = 0; j < d; ++j) x[j] = pts[ci][j] + rad * dir[j];
        if (domain.contains(x)) ++hits;
      }
      const double p = static_cast<double>(hits) / static_cast<double>(n_mc);
      if (p < cell.ratio) cell = {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n_mc)), r};
    }
    best[ci] = cell;
  });

  BallRatioReport rep;
  rep.min_ratio = 2.0;
  rep.centers_checked = pts.size();
  for (std::size_t ci = 0; ci < pts.size(); ++ci) {
    if (best[ci].ratio < rep.min_ratio) {
      rep.min_ratio = best[ci].ratio;
      rep.std_error = best[ci].se;
      rep.argmin_center = pts[ci];
      rep.argmin_radius = best[ci].r;
    }
  }
  return rep;
}

TubeReport tube_mass_ratio(const Domain& domain, const Sampler& q_sampler,
                           const std::vector<double>& eps_grid, std::size_t n_mc,
                           std::uint64_t seed) {
  if (eps_grid.empty()) throw InvalidArgument("tube_mass_ratio: empty eps grid");
  for (std::size_t i = 0; i < eps_grid.size(); ++i)
    if (!(eps_grid[i] > 0.0) || (i > 0 && !(eps_grid[i] < eps_grid[i - 1])))
      throw InvalidArgument("tube_mass_ratio: eps grid must be positive and decreasing");
  if (n_mc == 0) throw InvalidArgument("tube_mass_ratio: n_mc must be positive");

  const auto draws = draw_checked(domain, q_sampler, n_mc, seed);
  std::vector<double> delta(n_mc);
  for (std::size_t i = 0; i < n_mc; ++i) delta[i] = domain.delta(draws[i]);

  TubeReport rep;
  rep.eps_grid = eps_grid;
  const double n = static_cast<double>(n_mc);
  for (double eps : eps_grid) {
    const auto hits = std::count_if(delta.begin(), delta.end(), [&](double v) { return v <= eps; });
    const double p = static_cast<double>(hits) / n;
    rep.ratios.push_back(p / eps);
    rep.std_errors.push_back(std::sqrt(p * (1.0 - p) / n) / eps);
  }
  rep.verdict = classify_growth(rep.ratios, rep.std_errors);
  return rep;
}

}  // namespace knnshift
