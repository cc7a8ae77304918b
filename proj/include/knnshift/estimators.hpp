#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "knnshift/common.hpp"
#include "knnshift/knn.hpp"
#include "knnshift/polybasis.hpp"
#include "knnshift/samples.hpp"

namespace knnshift {

// ---------------------------------------------------------------------------
// Covariate-shift estimators of e(h) = E[h(X*, Y*)]
// ---------------------------------------------------------------------------

/// Matching-weight estimator: sum_i M*_k(X_i) / (m k) * h(X_i, Y_i).
/// The weights sum to one exactly.
double estimate_weight(const LabeledSample& source, const PointSet& targets, const HFunction& h,
                       std::size_t k);
double estimate_weight(const LabeledSample& source, const NNIndex& source_index,
                       const PointSet& targets, const HFunction& h, std::size_t k);

enum class CsaMode {
  sampled,           // draw one of the k nearest labels per target
  conditional_mean,  // average h over the k nearest labels
};

/// Conditional-sampling estimator: (1/m) sum_j h(X*_j, Yhat*_j) with Yhat*_j
/// drawn uniformly among the labels of the k nearest sources of X*_j.
double estimate_csa(const LabeledSample& source, const PointSet& targets, const HFunction& h,
                    std::size_t k, std::uint64_t seed, CsaMode mode = CsaMode::sampled);
double estimate_csa(const LabeledSample& source, const NNIndex& source_index,
                    const PointSet& targets, const HFunction& h, std::size_t k,
                    std::uint64_t seed, CsaMode mode = CsaMode::sampled);

/// Local least-squares fits whose moment matrix has a condition number
/// above this are rejected as degenerate.
inline constexpr double kMaxCondition = 1e12;

/// Intercept of the local polynomial least-squares fit of h(X_i, Y_i) on
/// zeta(x, X_i) over the k nearest sources of x. Throws DegenerateFit.
double local_poly_regress(const LabeledSample& source, const NNIndex& source_index, PointView x,
                          std::size_t k, const MultiIndexBasis& basis, const HFunction& h);
double local_poly_regress(const LabeledSample& source, PointView x, std::size_t k,
                          const MultiIndexBasis& basis, const HFunction& h);

struct LocalPolyOptions {
  /// Permissive mode only requires k >= K*; guaranteed mode requires
  /// k >= min_neighbours(basis).
  bool permissive = false;
  /// Fall back to the plain k-NN mean at targets whose fit is degenerate
  /// instead of aborting.
  bool fallback_to_mean = false;
};

struct LocalPolyResult {
  double estimate = 0.0;
  std::size_t fallback_count = 0;
};

/// (1/m) sum_j ghat(X*_j) with ghat the local polynomial fit of order L.
LocalPolyResult estimate_local_poly(const LabeledSample& source, const PointSet& targets,
                                    const HFunction& h, std::size_t k, unsigned order,
                                    const LocalPolyOptions& options = {});
LocalPolyResult estimate_local_poly(const LabeledSample& source, const NNIndex& source_index,
                                    const PointSet& targets, const HFunction& h, std::size_t k,
                                    unsigned order, const LocalPolyOptions& options = {});

// ---------------------------------------------------------------------------
// Treatment effects
// ---------------------------------------------------------------------------

struct AteResult {
  double ate = 0.0;             // weighting form
  double ate_imputation = 0.0;  // imputation form, equal up to roundoff
  double att = 0.0;
  double att_imputation = 0.0;
  std::vector<std::size_t> match_counts;  // M*_k(X_i) from the opposite arm
};

/// Nearest-neighbour matching estimators of the ATE and the ATT. Both the
/// weighting and the imputation forms are computed; a disagreement beyond
/// roundoff raises NumericalError.
AteResult estimate_ate(const ATESample& data, std::size_t k);
double estimate_att(const ATESample& data, std::size_t k);

/// ATE with per-arm local polynomial imputation of the missing outcome.
LocalPolyResult estimate_ate_local_poly(const ATESample& data, std::size_t k, unsigned order,
                                        const LocalPolyOptions& options = {});

// ---------------------------------------------------------------------------
// Theory constants
// ---------------------------------------------------------------------------

using ScalarField = std::function<double(PointView)>;
using VectorField = std::function<Point(PointView)>;
using MatrixField = std::function<std::vector<Point>(PointView)>;

/// Source density p with its gradient.
struct DensitySpec {
  ScalarField density;
  VectorField gradient;
};

/// Target law Q. Integrals use tensor Gauss-Kronrod quadrature over `box`
/// against `density` when dim <= 2, otherwise Monte Carlo with `sampler`.
struct TargetSpec {
  ScalarField density;
  Point box_lo, box_hi;
  Sampler sampler;
};

/// Regression function (g, or Delta(x, .) at u = x) through gradient and Hessian.
struct SmoothFunctionSpec {
  VectorField gradient;
  MatrixField hessian;
};

enum class BiasKind { weighting, conditional_sampling };

struct BiasConstant {
  double value = 0.0;         // C_i(k, P, Q, h)
  double gamma_factor = 0.0;  // (1/k) sum_l Gamma(l + 2/d) / Gamma(l)
  double integral = 0.0;      // int (p |V_d|)^{-2/d} Psi dQ
  double integral_std_error = 0.0;
  BiasKind kind = BiasKind::weighting;
};

/// (1/k) sum_{l=1}^{k} Gamma(l + 2/d) / Gamma(l).
double bias_gamma_factor(std::size_t k, std::size_t d);

/// Volume of the unit ball in R^d.
double unit_ball_volume(std::size_t d);

/// Psi(x) = (1/d) (grad g . grad p / p + tr(Hess g) / 2): the sphere average
/// of theta^T (grad g grad p^T / p + Hess g / 2) theta.
double psi_trace(const DensitySpec& p, const SmoothFunctionSpec& g, PointView x);

/// Leading constant of the first-order bias expansion E[B] ~ C n^{-2/d}.
/// `g` is the regression function for the weighting estimator, or the
/// Delta(x, .) derivatives at u = x for the conditional-sampling estimator.
BiasConstant theoretical_bias_constant(const DensitySpec& p, const TargetSpec& q,
                                       const SmoothFunctionSpec& g, std::size_t k, std::size_t d,
                                       std::size_t n_quad,
                                       BiasKind kind = BiasKind::weighting,
                                       std::uint64_t seed = 1);

/// Inputs of the asymptotic variance of the matching ATE estimator.
struct AteMoments {
  std::size_t dim = 1;
  ScalarField propensity;          // e(x)
  ScalarField g0, g1;              // E[Y(w) | X = x]
  ScalarField sigma0, sigma1;      // conditional standard deviations
  /// Marginal of X: uniform on [lo, hi] (d = 1 quadrature) when set,
  /// otherwise Monte Carlo from `sampler`.
  std::optional<std::pair<double, double>> uniform_interval;
  Sampler sampler;
  double overlap_margin = 0.0;     // eta
};

/// E[sigma1^2/e + sigma0^2/(1-e) + (g1 - g0 - tau)^2].
double semiparametric_variance(const AteMoments& moments, double tau, std::size_t n_quad,
                               std::uint64_t seed = 1);

}  // namespace knnshift
