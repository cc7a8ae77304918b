#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "knnshift/common.hpp"

namespace knnshift {

/// Bracket [lower, upper] around the distance to the complement.
/// Closed-form domains return lower == upper.
struct DistanceBracket {
  double lower = 0.0;
  double upper = 0.0;
};

struct BoundingBox {
  Point lo, hi;
  double volume() const;
};

/// A compact subset of R^d with a total membership test on its bounding box
/// and the distance delta(x) from an interior point to the complement.
class Domain {
 public:
  virtual ~Domain() = default;

  virtual std::size_t dim() const = 0;
  virtual BoundingBox bounding_box() const = 0;
  virtual std::string kind() const = 0;

  /// Throws InvalidArgument on dimension mismatch.
  bool contains(PointView x) const;

  /// delta(x) = inf{|x - z| : z not in the domain}. Throws if x is outside.
  DistanceBracket boundary_distance(PointView x) const;

  /// Conservative value used by the condition checks: the lower bracket end.
  double delta(PointView x) const { return boundary_distance(x).lower; }

 protected:
  virtual bool contains_impl(PointView x) const = 0;
  virtual DistanceBracket distance_impl(PointView x) const = 0;
};

using DomainPtr = std::shared_ptr<const Domain>;

DomainPtr make_box(Point lo, Point hi);
DomainPtr make_unit_box(std::size_t dim);
DomainPtr make_ball(Point center, double radius);
/// Polytope {x : A x <= b}; `normals` rows are the a_i. Must be bounded;
/// the caller supplies the bounding box.
DomainPtr make_polytope(std::vector<Point> normals, std::vector<double> offsets, BoundingBox box);
/// {(x, y) : 0 <= x <= 1, 0 <= y <= x^2}.
DomainPtr make_parabola_subgraph();
/// Union of rings a_k <= |x| <= b_k, k = 1..k_max, a_k = 1/(k+1),
/// b_k = a_{k-1} - gap/(k+1)^4, in the plane.
DomainPtr make_ring_union(std::size_t k_max, double gap);
DomainPtr make_union(std::vector<DomainPtr> parts);

/// Uniform law on the domain by rejection from its bounding box.
Sampler uniform_sampler(const DomainPtr& domain);

/// Distance from (x, y) to the curve t -> (t, t^2), t in [0, 1], bracketed.
DistanceBracket parabola_curve_distance(double x, double y);

// ---------------------------------------------------------------------------
// Boundary conditions
// ---------------------------------------------------------------------------

enum class Verdict { bounded, diverging, inconclusive };
std::string to_string(Verdict v);

/// Shared decision rule on a curve indexed by an increasing scale parameter.
/// bounded: the last three values are non-increasing within 3 standard errors.
/// diverging: last/first > 2 with the gap exceeding 3 combined standard errors.
Verdict classify_growth(const std::vector<double>& values, const std::vector<double>& std_errors);

struct ConditionReport {
  std::vector<double> L_grid;
  std::vector<double> I_values;
  std::vector<double> mc_std_errors;
  Verdict verdict = Verdict::inconclusive;

  std::string to_csv() const;  // columns L,I,stderr
};

/// I(L) = L^{1/d} E_Q[exp(-L delta(X)^d)], common random numbers across L.
ConditionReport check_condition_A(const Domain& domain, const Sampler& q_sampler,
                                  const std::vector<double>& L_grid, std::size_t n_mc,
                                  std::uint64_t seed);

struct BallRatioReport {
  double min_ratio = 1.0;
  double std_error = 0.0;
  Point argmin_center;
  double argmin_radius = 0.0;
  std::size_t centers_checked = 0;
};

/// min over centers x and radii r of |B(x,r) ∩ domain| / |B(x,r)|.
/// Uses `centers` when non-empty, otherwise `n_centers` uniform draws.
BallRatioReport check_condition_X2(const Domain& domain, std::size_t n_centers,
                                   const std::vector<double>& r_grid, std::size_t n_mc,
                                   std::uint64_t seed, const std::vector<Point>& centers = {});

struct TubeReport {
  std::vector<double> eps_grid;
  std::vector<double> ratios;  // Q(A_eps) / eps
  std::vector<double> std_errors;
  Verdict verdict = Verdict::inconclusive;

  std::string to_csv() const;  // columns eps,ratio,stderr
};

TubeReport tube_mass_ratio(const Domain& domain, const Sampler& q_sampler,
                           const std::vector<double>& eps_grid, std::size_t n_mc,
                           std::uint64_t seed);

/// Draws n_mc points from q_sampler in fixed chunks with per-chunk substreams;
/// throws if any draw falls outside the domain.
std::vector<Point> draw_checked(const Domain& domain, const Sampler& q_sampler, std::size_t n_mc,
                                std::uint64_t seed);

}  // namespace knnshift
