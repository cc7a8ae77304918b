#include "knnshift/estimators.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "knnshift/format.hpp"

namespace knnshift {

namespace {

void check_k(std::size_t k, std::size_t n, const char* where) {
  if (k < 1 || k > n)
    throw InvalidArgument(std::string(where) + ": k=" + std::to_string(k) + " out of range [1, " +
                          std::to_string(n) + "]");
}

void check_targets(const PointSet& targets, std::size_t dim, const char* where) {
  if (targets.empty()) throw InvalidArgument(std::string(where) + ": empty target sample");
  if (targets.dim() != dim) throw InvalidArgument(std::string(where) + ": target dimension mismatch");
}

}  // namespace

double estimate_weight(const LabeledSample& source, const NNIndex& source_index,
                       const PointSet& targets, const HFunction& h, std::size_t k) {
  source.validate("estimate_weight");
  check_k(k, source.size(), "estimate_weight");
  check_targets(targets, source.dim(), "estimate_weight");
  const CatchmentProfile prof = catchment_counts(source_index, targets, k);

  // Centred at one observed value so that a constant h is returned exactly.
  double center = 0.0;
  bool have_center = false;
  double acc = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (prof.counts[i] == 0) continue;
    const double v = h(source.covariates[i], source.labels[i]);
    if (!have_center) {
      center = v;
      have_center = true;
    }
    acc += static_cast<double>(prof.counts[i]) * (v - center);
  }
  return center + acc / static_cast<double>(prof.m * prof.k);
}

double estimate_weight(const LabeledSample& source, const PointSet& targets, const HFunction& h,
                       std::size_t k) {
  source.validate("estimate_weight");
  return estimate_weight(source, NNIndex(source.covariates), targets, h, k);
}

double estimate_csa(const LabeledSample& source, const NNIndex& source_index,
                    const PointSet& targets, const HFunction& h, std::size_t k,
                    std::uint64_t seed, CsaMode mode) {
  source.validate("estimate_csa");
  check_k(k, source.size(), "estimate_csa");
  check_targets(targets, source.dim(), "estimate_csa");

  Rng rng(seed);
  std::vector<Neighbor> nb;
  double center = 0.0, acc = 0.0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    source_index.knn_into(targets[j], k, nb);
    double v;
    if (mode == CsaMode::sampled) {
      const auto pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(k));
      v = h(targets[j], source.labels[nb[std::min(pick, k - 1)].index]);
      if (j == 0) center = v;
      acc += v - center;
    } else {
      if (j == 0) center = h(targets[j], source.labels[nb[0].index]);
      double s = 0.0;
      for (const auto& n : nb) s += h(targets[j], source.labels[n.index]) - center;
      acc += s / static_cast<double>(k);
    }
  }
  return center + acc / static_cast<double>(targets.size());
}

double estimate_csa(const LabeledSample& source, const PointSet& targets, const HFunction& h,
                    std::size_t k, std::uint64_t seed, CsaMode mode) {
  source.validate("estimate_csa");
  return estimate_csa(source, NNIndex(source.covariates), targets, h, k, seed, mode);
}

namespace {

double knn_mean(const LabeledSample& source, const std::vector<Neighbor>& nb, const HFunction& h) {
  double s = 0.0;
  for (const auto& n : nb) s += h(source.covariates[n.index], source.labels[n.index]);
  return s / static_cast<double>(nb.size());
}

// Coordinates are divided by the neighbourhood radius before building the
// design matrix. The intercept is unchanged and the condition number then
// reflects the geometry of the neighbours, not their scale.
double fit_intercept(const LabeledSample& source, const std::vector<Neighbor>& nb, PointView x,
                     const MultiIndexBasis& basis, const HFunction& h) {
  const std::size_t K = basis.size();
  if (K == 1) return knn_mean(source, nb, h);

  const double scale = std::sqrt(nb.back().squared_distance);
  if (!(scale > 0.0))
    throw DegenerateFit("local_poly_regress: all neighbours coincide with x=" + format_point(x));

  Eigen::MatrixXd Z(nb.size(), K);
  Eigen::VectorXd y(nb.size());
  std::vector<double> row(K);
  for (std::size_t i = 0; i < nb.size(); ++i) {
    monomial_vector_scaled(basis, x, source.covariates[nb[i].index], scale, row);
    for (std::size_t j = 0; j < K; ++j) Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    y(static_cast<Eigen::Index>(i)) = h(source.covariates[nb[i].index], source.labels[nb[i].index]);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0), smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || (smax / smin) * (smax / smin) > kMaxCondition)
    throw DegenerateFit("local_poly_regress: ill-conditioned moment matrix at x=" + format_point(x));
  const Eigen::VectorXd gamma = svd.solve(y);
  return gamma(0);
}

}  // namespace

double local_poly_regress(const LabeledSample& source, const NNIndex& source_index, PointView x,
                          std::size_t k, const MultiIndexBasis& basis, const HFunction& h) {
  require_dim(x, source.dim(), "local_poly_regress");
  if (basis.dim() != source.dim()) throw InvalidArgument("local_poly_regress: basis dimension mismatch");
  check_k(k, source.size(), "local_poly_regress");
  if (k < basis.size())
    throw InvalidArgument("local_poly_regress: k=" + std::to_string(k) + " < K*=" +
                          std::to_string(basis.size()));
  std::vector<Neighbor> nb;
  source_index.knn_into(x, k, nb);
  return fit_intercept(source, nb, x, basis, h);
}

double local_poly_regress(const LabeledSample& source, PointView x, std::size_t k,
                          const MultiIndexBasis& basis, const HFunction& h) {
  source.validate("local_poly_regress");
  return local_poly_regress(source, NNIndex(source.covariates), x, k, basis, h);
}

namespace {

void check_poly_k(std::size_t k, const MultiIndexBasis& basis, const LocalPolyOptions& opt,
                  const char* where) {
  if (opt.permissive) {
    if (k < basis.size())
      throw InvalidArgument(std::string(where) + ": k=" + std::to_string(k) + " < K*=" +
                            std::to_string(basis.size()));
  } else if (k < min_neighbours(basis)) {
    throw InvalidArgument(std::string(where) + ": k=" + std::to_string(k) +
                          " below the guaranteed minimum " + std::to_string(min_neighbours(basis)) +
                          " (use permissive mode)");
  }
}

}  // namespace

LocalPolyResult estimate_local_poly(const LabeledSample& source, const NNIndex& source_index,
                                    const PointSet& targets, const HFunction& h, std::size_t k,
                                    unsigned order, const LocalPolyOptions& options) {
  source.validate("estimate_local_poly");
  check_k(k, source.size(), "estimate_local_poly");
  check_targets(targets, source.dim(), "estimate_local_poly");
  const MultiIndexBasis basis(source.dim(), order);
  check_poly_k(k, basis, options, "estimate_local_poly");

  LocalPolyResult res;
  std::vector<Neighbor> nb;
  double acc = 0.0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    source_index.knn_into(targets[j], k, nb);
    double v;
    try {
      v = fit_intercept(source, nb, targets[j], basis, h);
    } catch (const DegenerateFit&) {
      if (!options.fallback_to_mean) throw;
      v = knn_mean(source, nb, h);
      ++res.fallback_count;
    }
    acc += v;
  }
  res.estimate = acc / static_cast<double>(targets.size());
  return res;
}

LocalPolyResult estimate_local_poly(const LabeledSample& source, const PointSet& targets,
                                    const HFunction& h, std::size_t k, unsigned order,
                                    const LocalPolyOptions& options) {
  source.validate("estimate_local_poly");
  return estimate_local_poly(source, NNIndex(source.covariates), targets, h, k, order, options);
}

// ---------------------------------------------------------------------------
// Treatment effects
// ---------------------------------------------------------------------------

namespace {

struct Arms {
  std::vector<std::size_t> members[2];  // global indices per arm
  LabeledSample sample[2];
};

Arms split_arms(const ATESample& data) {
  Arms a;
  for (std::size_t i = 0; i < data.size(); ++i) a.members[data.treated[i] ? 1 : 0].push_back(i);
  for (int w = 0; w < 2; ++w) {
    a.sample[w].covariates = PointSet(data.covariates.dim());
    a.sample[w].covariates.reserve(a.members[w].size());
    for (std::size_t i : a.members[w]) {
      a.sample[w].covariates.push_back(data.covariates[i]);
      a.sample[w].labels.push_back(data.outcomes[i]);
    }
  }
  return a;
}

}  // namespace

AteResult estimate_ate(const ATESample& data, std::size_t k) {
  data.validate("estimate_ate");
  const std::size_t N = data.size();
  const std::size_t N1 = data.n_treated(), N0 = N - N1;
  if (k < 1 || k > std::min(N0, N1))
    throw InvalidArgument("estimate_ate: k=" + std::to_string(k) + " exceeds the smaller arm (" +
                          std::to_string(std::min(N0, N1)) + ")");

  const Arms arms = split_arms(data);
  const NNIndex index[2] = {NNIndex(arms.sample[0].covariates), NNIndex(arms.sample[1].covariates)};

  AteResult res;
  res.match_counts.assign(N, 0);
  std::vector<double> imputed(N);  // mean outcome of the k matches from the other arm
  std::vector<Neighbor> nb;
  for (std::size_t i = 0; i < N; ++i) {
    const int other = data.treated[i] ? 0 : 1;
    index[other].knn_into(data.covariates[i], k, nb);
    double s = 0.0;
    for (const auto& n : nb) {
      const std::size_t g = arms.members[other][n.index];
      ++res.match_counts[g];
      s += data.outcomes[g];
    }
    imputed[i] = s / static_cast<double>(k);
  }

  // Outcomes are centred at Y_0: the integer weights (2W-1)(k+M) and
  // (kW - (1-W)M) sum to zero, so the shift cancels exactly and constant
  // outcomes give exactly zero.
  const double c = data.outcomes[0];
  const double kd = static_cast<double>(k);
  double w_ate = 0.0, i_ate = 0.0, w_att = 0.0, i_att = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double y = data.outcomes[i] - c;
    const double m = static_cast<double>(res.match_counts[i]);
    const double diff = data.outcomes[i] - imputed[i];
    if (data.treated[i]) {
      w_ate += (kd + m) * y;
      i_ate += diff;
      w_att += kd * y;
      i_att += diff;
    } else {
      w_ate -= (kd + m) * y;
      i_ate -= diff;
      w_att -= m * y;
    }
  }
  res.ate = w_ate / (kd * static_cast<double>(N));
  res.ate_imputation = i_ate / static_cast<double>(N);
  res.att = w_att / (kd * static_cast<double>(N1));
  res.att_imputation = i_att / static_cast<double>(N1);

  double scale = 1.0;
  for (double y : data.outcomes) scale = std::max(scale, std::abs(y));
  const double tol = 1e-9 * scale;
  if (std::abs(res.ate - res.ate_imputation) > tol || std::abs(res.att - res.att_imputation) > tol)
    throw NumericalError("estimate_ate: weighting and imputation forms disagree");
  return res;
}

double estimate_att(const ATESample& data, std::size_t k) { return estimate_ate(data, k).att; }

LocalPolyResult estimate_ate_local_poly(const ATESample& data, std::size_t k, unsigned order,
                                        const LocalPolyOptions& options) {
  data.validate("estimate_ate_local_poly");
  const std::size_t N = data.size();
  const std::size_t N1 = data.n_treated(), N0 = N - N1;
  if (k < 1 || k > std::min(N0, N1))
    throw InvalidArgument("estimate_ate_local_poly: k=" + std::to_string(k) +
                          " exceeds the smaller arm");
  const MultiIndexBasis basis(data.covariates.dim(), order);
  check_poly_k(k, basis, options, "estimate_ate_local_poly");

  const Arms arms = split_arms(data);
  const NNIndex index[2] = {NNIndex(arms.sample[0].covariates), NNIndex(arms.sample[1].covariates)};
  const HFunction h = HFunction::label();

  LocalPolyResult res;
  std::vector<Neighbor> nb;
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const int other = data.treated[i] ? 0 : 1;
    index[other].knn_into(data.covariates[i], k, nb);
    double g;
    try {
      g = fit_intercept(arms.sample[other], nb, data.covariates[i], basis, h);
    } catch (const DegenerateFit&) {
      if (!options.fallback_to_mean) throw;
      g = knn_mean(arms.sample[other], nb, h);
      ++res.fallback_count;
    }
    acc += (data.treated[i] ? 1.0 : -1.0) * (data.outcomes[i] - g);
  }
  res.estimate = acc / static_cast<double>(N);
  return res;
}

// ---------------------------------------------------------------------------
// Theory constants
// ---------------------------------------------------------------------------

double unit_ball_volume(std::size_t d) {
  const double h = 0.5 * static_cast<double>(d);
  return std::pow(std::numbers::pi, h) / boost::math::tgamma(h + 1.0);
}

double bias_gamma_factor(std::size_t k, std::size_t d) {
  if (k == 0 || d == 0) throw InvalidArgument("bias_gamma_factor: k and d must be positive");
  const double s = 2.0 / static_cast<double>(d);
  double acc = 0.0;
  // tgamma_delta_ratio(l, s) = Gamma(l) / Gamma(l + s)
  for (std::size_t l = 1; l <= k; ++l)
    acc += 1.0 / boost::math::tgamma_delta_ratio(static_cast<double>(l), s);
  return acc / static_cast<double>(k);
}

double psi_trace(const DensitySpec& p, const SmoothFunctionSpec& g, PointView x) {
  const double px = p.density(x);
  if (!(px > 0.0)) throw InvalidArgument("theoretical_bias_constant: non-positive density at " + format_point(x));
  const Point gp = p.gradient(x);
  const Point gg = g.gradient(x);
  const auto H = g.hessian(x);
  const std::size_t d = x.size();
  double dot = 0.0, tr = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    dot += gg[j] * gp[j];
    tr += H[j][j];
  }
  return (dot / px + 0.5 * tr) / static_cast<double>(d);
}

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 61>;

double integrate_1d(const std::function<double(double)>& f, double a, double b) {
  double err = 0.0;
  return GK::integrate(f, a, b, 15, 1e-12, &err);
}

}  // namespace

BiasConstant theoretical_bias_constant(const DensitySpec& p, const TargetSpec& q,
                                       const SmoothFunctionSpec& g, std::size_t k, std::size_t d,
                                       std::size_t n_quad, BiasKind kind, std::uint64_t seed) {
  if (d == 0) throw InvalidArgument("theoretical_bias_constant: d must be positive");
  const double vd = unit_ball_volume(d);
  const double expo = -2.0 / static_cast<double>(d);
  auto integrand = [&](PointView x) {
    const double px = p.density(x);
    if (!(px > 0.0))
      throw InvalidArgument("theoretical_bias_constant: non-positive density at " + format_point(x));
    return std::pow(px * vd, expo) * psi_trace(p, g, x);
  };

  BiasConstant out;
  out.kind = kind;
  out.gamma_factor = bias_gamma_factor(k, d);
  if (d <= 2 && q.density && q.box_lo.size() == d && q.box_hi.size() == d) {
    if (d == 1) {
      out.integral = integrate_1d(
          [&](double t) {
            const Point x{t};
            return integrand(x) * q.density(x);
          },
          q.box_lo[0], q.box_hi[0]);
    } else {
      out.integral = integrate_1d(
          [&](double s) {
            return integrate_1d(
                [&](double t) {
                  const Point x{s, t};
                  return integrand(x) * q.density(x);
                },
                q.box_lo[1], q.box_hi[1]);
          },
          q.box_lo[0], q.box_hi[0]);
    }
  } else {
    if (!q.sampler) throw InvalidArgument("theoretical_bias_constant: d >= 3 needs a target sampler");
    if (n_quad < 2) throw InvalidArgument("theoretical_bias_constant: n_quad must be >= 2");
    Rng rng(seed);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n_quad; ++i) {
      const Point x = q.sampler(rng);
      require_dim(x, d, "theoretical_bias_constant sampler");
      const double v = integrand(x);
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(n_quad);
    out.integral = s / n;
    out.integral_std_error = std::sqrt(std::max(0.0, s2 / n - out.integral * out.integral) / (n - 1.0));
  }
  out.value = out.gamma_factor * out.integral;
  return out;
}

double semiparametric_variance(const AteMoments& mom, double tau, std::size_t n_quad,
                               std::uint64_t seed) {
  auto integrand = [&](PointView x) {
    const double e = mom.propensity(x);
    if (!(e > mom.overlap_margin && e < 1.0 - mom.overlap_margin))
      throw InvalidArgument("semiparametric_variance: overlap violated at " + format_point(x) +
                            " (e=" + format_double(e) + ")");
    const double s1 = mom.sigma1(x), s0 = mom.sigma0(x);
    const double te = mom.g1(x) - mom.g0(x) - tau;
    return s1 * s1 / e + s0 * s0 / (1.0 - e) + te * te;
  };
  if (mom.uniform_interval && mom.dim == 1) {
    const auto [lo, hi] = *mom.uniform_interval;
    if (!(hi > lo)) throw InvalidArgument("semiparametric_variance: empty interval");
    return integrate_1d(
               [&](double t) {
                 const Point x{t};
                 return integrand(x);
               },
               lo, hi) /
           (hi - lo);
  }
  if (!mom.sampler) throw InvalidArgument("semiparametric_variance: no covariate sampler");
  if (n_quad < 2) throw InvalidArgument("semiparametric_variance: n_quad must be >= 2");
  Rng rng(seed);
  double s = 0.0;
  for (std::size_t i = 0; i < n_quad; ++i) s += integrand(mom.sampler(rng));
  return s / static_cast<double>(n_quad);
}

}  // namespace knnshift
