#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "knnshift/common.hpp"
#include "knnshift/estimators.hpp"
#include "knnshift/samples.hpp"

namespace knnshift {

/// Normal(mu, sigma) conditioned on [lo, hi].
struct TruncatedNormal {
  double mu = 0.0;
  double sigma = 1.0;
  double lo = -1.0;
  double hi = 1.0;

  void validate() const;
  double pdf(double x) const;
  double cdf(double x) const;
  double mean() const;
  /// Inverse-CDF transform of u in [0, 1).
  double quantile(double u) const;
  double draw(Rng& rng) const { return quantile(uniform01(rng)); }
};

std::vector<double> sample_truncated_normal(const TruncatedNormal& law, std::size_t n,
                                            std::uint64_t seed);

/// Law of the first covariate: a truncated normal, or a point mass at
/// `point_mass` when set.
struct FirstCoordinateLaw {
  TruncatedNormal tn;
  std::optional<double> point_mass;

  double draw(Rng& rng) const { return point_mass ? *point_mass : tn.draw(rng); }
};

/// Covariate-shift setup. Covariates live in [-1, 1]^d; source and target
/// differ only in the law of the first coordinate; the remaining
/// coordinates are U[-1, 1]. Y = f(X) + noise_sd * N(0, 1), with
/// f(x) = |x_1|^3 unless `response` is given; h(x, y) = (x_1 + y)^2.
struct SetupSpec {
  std::string name = "TN0.5-Cubic";
  std::size_t dim = 1;
  FirstCoordinateLaw source;
  FirstCoordinateLaw target;
  double noise_sd = 0.1;
  std::function<double(PointView)> response;  // empty: |x_1|^3

  double regression(PointView x) const;
  /// g(x) = E[h(X, Y) | X = x].
  double g(PointView x) const;
  HFunction h() const { return HFunction::first_coord_plus_label_squared(); }
  bool closed_form() const { return !response; }
};

/// Named setups: "TN0.5-Cubic" (source TN(-0.5, 0.5, [-1, 1]), target
/// TN(0.5, 0.5, [-1, 1])) and "TN0.5-Cubic-Reversed" (laws swapped).
SetupSpec make_setup(const std::string& name, std::size_t dim);
std::vector<std::string> setup_names();

struct SetupDraw {
  LabeledSample source;
  PointSet targets;
  std::vector<double> target_labels;  // hidden; only the OracleY baseline reads them
};

SetupDraw gen_setup(const SetupSpec& spec, std::size_t n, std::size_t m, std::uint64_t seed);

struct OracleValue {
  double value = 0.0;
  double std_error = 0.0;  // zero for quadrature
};

/// e(h) = int g dQ. Quadrature over the first coordinate for closed-form
/// setups, otherwise Monte Carlo until the standard error reaches `precision`.
OracleValue oracle_expectation(const SetupSpec& spec, double precision = 1e-4,
                               std::uint64_t seed = 7);

/// Observational design: X ~ U[lo, hi]^d, W ~ Bernoulli(e(X)),
/// Y = g_W(X) + sigma_W(X) * N(0, 1).
struct ATEDGPSpec {
  std::size_t dim = 1;
  double lo = 0.0, hi = 1.0;
  ScalarField propensity;
  ScalarField g0, g1;
  ScalarField sigma0, sigma1;
  double overlap_margin = 0.05;
  /// E[g1 - g0]; computed numerically when unset.
  std::optional<double> tau;

  AteMoments moments() const;
  double true_tau(std::size_t n_mc = 1'000'000, std::uint64_t seed = 11) const;
  /// Throws if e leaves (eta, 1 - eta) on a validation grid.
  void validate() const;
};

/// X ~ U[0, 1], e(x) = 0.25 + 0.5 x, g0 = x^2, g1 = x^2 + x, tau = 0.5.
ATEDGPSpec default_ate_dgp(double sigma = 1.0);

struct ATEDraw {
  ATESample sample;
  double tau = 0.0;
};

ATEDraw gen_ate_dgp(const ATEDGPSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace knnshift
