#include "knnshift/datagen.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace knnshift {

namespace {

const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);

using GK = boost::math::quadrature::gauss_kronrod<double, 61>;

double integrate(const std::function<double(double)>& f, double a, double b) {
  double err = 0.0;
  return GK::integrate(f, a, b, 20, 1e-13, &err);
}

}  // namespace

void TruncatedNormal::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw InvalidArgument("truncated normal: sigma must be positive");
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw InvalidArgument("truncated normal: degenerate interval");
  const double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
  const double mass = a > 0.0 ? boost::math::cdf(boost::math::complement(kStdNormal, a)) -
                                    boost::math::cdf(boost::math::complement(kStdNormal, b))
                              : boost::math::cdf(kStdNormal, b) - boost::math::cdf(kStdNormal, a);
  if (!(mass > 0.0)) throw InvalidArgument("truncated normal: interval carries no mass");
}

double TruncatedNormal::pdf(double x) const {
  if (x < lo || x > hi) return 0.0;
  const double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
  const double z = boost::math::cdf(kStdNormal, b) - boost::math::cdf(kStdNormal, a);
  return boost::math::pdf(kStdNormal, (x - mu) / sigma) / (sigma * z);
}

double TruncatedNormal::cdf(double x) const {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  const double a = (lo - mu) / sigma, b = (hi - mu) / sigma, t = (x - mu) / sigma;
  const double fa = boost::math::cdf(kStdNormal, a);
  return (boost::math::cdf(kStdNormal, t) - fa) / (boost::math::cdf(kStdNormal, b) - fa);
}

double TruncatedNormal::mean() const {
  const double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
  const double z = boost::math::cdf(kStdNormal, b) - boost::math::cdf(kStdNormal, a);
  return mu + sigma * (boost::math::pdf(kStdNormal, a) - boost::math::pdf(kStdNormal, b)) / z;
}

double TruncatedNormal::quantile(double u) const {
  const double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
  double z;
  if (a > 0.0) {
    // Upper tail: work with survival functions to keep precision.
    const double sa = boost::math::cdf(boost::math::complement(kStdNormal, a));
    const double sb = boost::math::cdf(boost::math::complement(kStdNormal, b));
    const double s = sa - u * (sa - sb);
    if (s >= 1.0) return lo;
    if (s <= 0.0) return hi;
    z = boost::math::quantile(boost::math::complement(kStdNormal, s));
  } else {
    const double fa = boost::math::cdf(kStdNormal, a);
    const double fb = boost::math::cdf(kStdNormal, b);
    const double p = fa + u * (fb - fa);
    if (p <= 0.0) return lo;
    if (p >= 1.0) return hi;
    z = boost::math::quantile(kStdNormal, p);
  }
  return std::clamp(mu + sigma * z, lo, hi);
}

std::vector<double> sample_truncated_normal(const TruncatedNormal& law, std::size_t n,
                                            std::uint64_t seed) {
  law.validate();
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = law.draw(rng);
  return out;
}

double SetupSpec::regression(PointView x) const {
  if (response) return response(x);
  const double a = std::abs(x[0]);
  return a * a * a;
}

double SetupSpec::g(PointView x) const {
  const double s = x[0] + regression(x);
  return s * s + noise_sd * noise_sd;
}

std::vector<std::string> setup_names() { return {"TN0.5-Cubic", "TN0.5-Cubic-Reversed"}; }

SetupSpec make_setup(const std::string& name, std::size_t dim) {
  if (dim == 0) throw InvalidArgument("setup: dimension must be positive");
  SetupSpec s;
  s.name = name;
  s.dim = dim;
  const TruncatedNormal left{-0.5, 0.5, -1.0, 1.0}, right{0.5, 0.5, -1.0, 1.0};
  if (name == "TN0.5-Cubic") {
    s.source.tn = left;
    s.target.tn = right;
  } else if (name == "TN0.5-Cubic-Reversed") {
    s.source.tn = right;
    s.target.tn = left;
  } else {
    throw InvalidArgument("unknown setup '" + name + "'");
  }
  return s;
}

namespace {

void draw_covariate(const SetupSpec& spec, const FirstCoordinateLaw& law, Rng& rng,
                    std::span<double> x) {
  x[0] = law.draw(rng);
  for (std::size_t j = 1; j < spec.dim; ++j) x[j] = 2.0 * uniform01(rng) - 1.0;
}

void check_law(const FirstCoordinateLaw& law) {
  if (law.point_mass) {
    if (!(*law.point_mass >= -1.0 && *law.point_mass <= 1.0))
      throw InvalidArgument("setup: point mass outside [-1, 1]");
  } else {
    law.tn.validate();
    if (law.tn.lo < -1.0 || law.tn.hi > 1.0)
      throw InvalidArgument("setup: truncation interval must lie in [-1, 1]");
  }
}

}  // namespace

SetupDraw gen_setup(const SetupSpec& spec, std::size_t n, std::size_t m, std::uint64_t seed) {
  if (n == 0 || m == 0) throw InvalidArgument("gen_setup: n and m must be positive");
  if (spec.dim == 0) throw InvalidArgument("gen_setup: dimension must be positive");
  check_law(spec.source);
  check_law(spec.target);

  SetupDraw out;
  out.source.covariates = PointSet(spec.dim, std::vector<double>(n * spec.dim));
  out.source.labels.resize(n);
  out.targets = PointSet(spec.dim, std::vector<double>(m * spec.dim));
  out.target_labels.resize(m);

  Rng src(derive_seed(seed, 1)), tgt(derive_seed(seed, 2));
  for (std::size_t i = 0; i < n; ++i) {
    auto x = out.source.covariates.mutable_row(i);
    draw_covariate(spec, spec.source, src, x);
    out.source.labels[i] = spec.regression(x) + spec.noise_sd * standard_normal(src);
  }
  for (std::size_t j = 0; j < m; ++j) {
    auto x = out.targets.mutable_row(j);
    draw_covariate(spec, spec.target, tgt, x);
    out.target_labels[j] = spec.regression(x) + spec.noise_sd * standard_normal(tgt);
  }
  return out;
}

OracleValue oracle_expectation(const SetupSpec& spec, double precision, std::uint64_t seed) {
  check_law(spec.target);
  if (spec.closed_form()) {
    auto g1 = [&](double t) {
      const double s = t + std::abs(t) * t * t;
      return s * s + spec.noise_sd * spec.noise_sd;
    };
    if (spec.target.point_mass) return {g1(*spec.target.point_mass), 0.0};
    const TruncatedNormal& tn = spec.target.tn;
    auto f = [&](double t) { return g1(t) * tn.pdf(t); };
    double v;
    if (tn.lo < 0.0 && tn.hi > 0.0)
      v = integrate(f, tn.lo, 0.0) + integrate(f, 0.0, tn.hi);
    else
      v = integrate(f, tn.lo, tn.hi);
    return {v, 0.0};
  }

  if (!(precision > 0.0)) throw InvalidArgument("oracle_expectation: precision must be positive");
  constexpr std::size_t kBatch = 100'000, kMaxDraws = 100'000'000;
  Rng rng(seed);
  Point x(spec.dim);
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  while (true) {
    for (std::size_t i = 0; i < kBatch; ++i) {
      draw_covariate(spec, spec.target, rng, x);
      const double v = spec.g(x);
      s += v;
      s2 += v * v;
    }
    n += kBatch;
    const double mean = s / static_cast<double>(n);
    const double var = std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
    const double se = std::sqrt(var / static_cast<double>(n - 1));
    if (se <= precision || n >= kMaxDraws) return {mean, se};
  }
}

// ---------------------------------------------------------------------------

AteMoments ATEDGPSpec::moments() const {
  AteMoments m;
  m.dim = dim;
  m.propensity = propensity;
  m.g0 = g0;
  m.g1 = g1;
  m.sigma0 = sigma0;
  m.sigma1 = sigma1;
  m.overlap_margin = overlap_margin;
  if (dim == 1) m.uniform_interval = std::make_pair(lo, hi);
  const double a = lo, b = hi;
  const std::size_t d = dim;
  m.sampler = [a, b, d](Rng& rng) {
    Point x(d);
    for (auto& v : x) v = a + (b - a) * uniform01(rng);
    return x;
  };
  return m;
}

double ATEDGPSpec::true_tau(std::size_t n_mc, std::uint64_t seed) const {
  if (tau) return *tau;
  if (dim == 1)
    return integrate(
               [&](double t) {
                 const Point x{t};
                 return g1(x) - g0(x);
               },
               lo, hi) /
           (hi - lo);
  Rng rng(seed);
  Point x(dim);
  double s = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    for (auto& v : x) v = lo + (hi - lo) * uniform01(rng);
    s += g1(x) - g0(x);
  }
  return s / static_cast<double>(n_mc);
}

void ATEDGPSpec::validate() const {
  if (dim == 0) throw InvalidArgument("ATE DGP: dimension must be positive");
  if (!(lo < hi)) throw InvalidArgument("ATE DGP: empty covariate box");
  if (!propensity || !g0 || !g1 || !sigma0 || !sigma1)
    throw InvalidArgument("ATE DGP: propensity, g0, g1, sigma0 and sigma1 are required");
  if (!(overlap_margin >= 0.0 && overlap_margin < 0.5))
    throw InvalidArgument("ATE DGP: overlap margin must lie in [0, 0.5)");

  auto check = [&](PointView x) {
    const double e = propensity(x);
    if (!(e > overlap_margin && e < 1.0 - overlap_margin))
      throw InvalidArgument("ATE DGP: propensity " + std::to_string(e) +
                            " violates overlap at a validation point");
  };
  // Tensor grid in low dimension, random points otherwise.
  const std::size_t per_axis = dim == 1 ? 1001 : dim == 2 ? 101 : dim == 3 ? 41 : 0;
  Point x(dim);
  if (per_axis > 0) {
    std::size_t total = 1;
    for (std::size_t j = 0; j < dim; ++j) total *= per_axis;
    for (std::size_t c = 0; c < total; ++c) {
      std::size_t r = c;
      for (std::size_t j = 0; j < dim; ++j) {
        x[j] = lo + (hi - lo) * static_cast<double>(r % per_axis) / static_cast<double>(per_axis - 1);
        r /= per_axis;
      }
      check(x);
    }
  } else {
    Rng rng(derive_seed(0x5eed, dim));
    for (std::size_t i = 0; i < 20000; ++i) {
      for (auto& v : x) v = lo + (hi - lo) * uniform01(rng);
      check(x);
    }
  }
}

ATEDGPSpec default_ate_dgp(double sigma) {
  ATEDGPSpec s;
  s.propensity = [](PointView x) { return 0.25 + 0.5 * x[0]; };
  s.g0 = [](PointView x) { return x[0] * x[0]; };
  s.g1 = [](PointView x) { return x[0] * x[0] + x[0]; };
  s.sigma0 = [sigma](PointView) { return sigma; };
  s.sigma1 = [sigma](PointView) { return sigma; };
  s.overlap_margin = 0.2;
  s.tau = 0.5;
  return s;
}

ATEDraw gen_ate_dgp(const ATEDGPSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("gen_ate_dgp: N must be positive");
  spec.validate();
  ATEDraw out;
  out.tau = spec.true_tau();
  ATESample& s = out.sample;
  s.covariates = PointSet(spec.dim, std::vector<double>(n * spec.dim));
  s.outcomes.resize(n);
  s.treated.resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = s.covariates.mutable_row(i);
    for (auto& v : x) v = spec.lo + (spec.hi - spec.lo) * uniform01(rng);
    const bool w = uniform01(rng) < spec.propensity(x);
    const double eps = standard_normal(rng);
    s.treated[i] = w;
    s.outcomes[i] = w ? spec.g1(x) + spec.sigma1(x) * eps : spec.g0(x) + spec.sigma0(x) * eps;
  }
  return out;
}

}  // namespace knnshift
