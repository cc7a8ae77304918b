#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace knnshift {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test of `sample` against `cdf`.
/// p-value from the asymptotic Kolmogorov law with Stephens' correction.
KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf);

/// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Exact (Clopper-Pearson) two-sided interval for a binomial proportion.
Interval binomial_interval(std::size_t successes, std::size_t trials, double level = 0.95);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;  // residual-based OLS standard error of the slope
};

/// Least-squares slope of log(error) on log(n).
RateFit fit_rate(const std::vector<double>& n_values, const std::vector<double>& errors);

struct MeanStd {
  double mean = 0.0;
  double std_error = 0.0;
};

MeanStd mean_and_std_error(const std::vector<double>& v);

}  // namespace knnshift
