#include "knnshift/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/binomial.hpp>

#include "knnshift/common.hpp"

namespace knnshift {

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  // The alternating series converges slowly for small lambda; there the
  // Jacobi-theta form is used instead.
  if (lambda < 1.0) {
    constexpr double pi = 3.14159265358979323846;
    const double c = pi * pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int j = 1; j < 100; j += 2) {
      const double term = std::exp(-static_cast<double>(j * j) * c);
      s += term;
      if (term < 1e-18) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int j = 1; j < 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    s += (j % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InvalidArgument("ks_test: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double rn = std::sqrt(n);
  return {d, kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d)};
}

Interval binomial_interval(std::size_t successes, std::size_t trials, double level) {
  if (trials == 0) throw InvalidArgument("binomial_interval: no trials");
  if (successes > trials) throw InvalidArgument("binomial_interval: successes exceed trials");
  const double alpha = (1.0 - level) / 2.0;
  using B = boost::math::binomial_distribution<double>;
  const double n = static_cast<double>(trials), k = static_cast<double>(successes);
  return {B::find_lower_bound_on_p(n, k, alpha), B::find_upper_bound_on_p(n, k, alpha)};
}

RateFit fit_rate(const std::vector<double>& n_values, const std::vector<double>& errors) {
  if (n_values.size() != errors.size()) throw InvalidArgument("fit_rate: length mismatch");
  if (n_values.size() < 3) throw InvalidArgument("fit_rate: need at least 3 points");
  const std::size_t m = n_values.size();
  std::vector<double> x(m), y(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(n_values[i] > 0.0)) throw InvalidArgument("fit_rate: n values must be positive");
    if (!(errors[i] > 0.0)) throw InvalidArgument("fit_rate: errors must be positive");
    x[i] = std::log(n_values[i]);
    y[i] = std::log(errors[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("fit_rate: n values must not all be equal");
  RateFit r;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = y[i] - r.intercept - r.slope * x[i];
    rss += e * e;
  }
  r.std_error = std::sqrt(rss / static_cast<double>(m - 2) / sxx);
  return r;
}

MeanStd mean_and_std_error(const std::vector<double>& v) {
  if (v.size() < 2) throw InvalidArgument("mean_and_std_error: need at least 2 values");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace knnshift
