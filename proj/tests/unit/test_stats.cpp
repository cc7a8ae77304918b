#include <cmath>

#include "doctest.h"
#include "knnshift/common.hpp"
#include "knnshift/stats.hpp"

using namespace knnshift;

TEST_CASE("Kolmogorov distribution") {
  CHECK(kolmogorov_survival(0.0) == 1.0);
  CHECK(kolmogorov_survival(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_survival(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(kolmogorov_survival(0.5) == doctest::Approx(0.963945).epsilon(1e-5));
  CHECK(kolmogorov_survival(10.0) < 1e-80);
  double prev = 1.0;
  for (double l = 0.05; l < 3.0; l += 0.05) {
    const double s = kolmogorov_survival(l);
    CHECK(s <= prev);
    prev = s;
  }
}

TEST_CASE("KS test") {
  Rng rng(8);
  std::vector<double> u(5000);
  for (auto& v : u) v = uniform01(rng);
  const auto unif = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(ks_test(u, unif).p_value > 0.01);
  std::vector<double> sq = u;
  for (auto& v : sq) v *= v;
  CHECK(ks_test(sq, unif).p_value < 1e-10);

  // D+ = max(1/3 - 0.1, 2/3 - 0.5, 1 - 0.6)
  const KsResult r = ks_test({0.1, 0.5, 0.6}, unif);
  CHECK(r.statistic == doctest::Approx(0.4).epsilon(1e-14));
  CHECK_THROWS_AS(ks_test({}, unif), InvalidArgument);
}

TEST_CASE("binomial interval") {
  const Interval a = binomial_interval(0, 10);
  CHECK(a.lo == 0.0);
  CHECK(a.hi == doctest::Approx(1.0 - std::pow(0.025, 0.1)).epsilon(1e-10));
  const Interval b = binomial_interval(10, 10);
  CHECK(b.hi == 1.0);
  CHECK(b.lo == doctest::Approx(std::pow(0.025, 0.1)).epsilon(1e-10));
  const Interval c = binomial_interval(190, 200);
  CHECK(c.lo < 0.95);
  CHECK(c.hi > 0.95);
  CHECK_THROWS_AS(binomial_interval(3, 2), InvalidArgument);
}

TEST_CASE("rate fit") {
  const std::vector<double> n{500, 1000, 2000, 4000, 8000, 16000};
  std::vector<double> e(n.size());
  for (double p : {-0.5, -1.0, -0.4, 0.0}) {
    for (std::size_t i = 0; i < n.size(); ++i) e[i] = 3.0 * std::pow(n[i], p);
    const RateFit f = fit_rate(n, e);
    CHECK(std::abs(f.slope - p) <= 1e-12);
    CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(f.std_error <= 1e-12);
  }
  for (std::size_t i = 0; i < n.size(); ++i) e[i] = std::pow(n[i], -0.5) * (i % 2 ? 1.1 : 0.9);
  const RateFit g = fit_rate(n, e);
  CHECK(g.std_error > 0.0);
  CHECK(std::abs(g.slope + 0.5) < 3.0 * g.std_error);

  CHECK_THROWS_AS(fit_rate({1, 2}, {1, 2}), InvalidArgument);
  CHECK_THROWS_AS(fit_rate({1, 2, 3}, {1, 0, 2}), InvalidArgument);
  CHECK_THROWS_AS(fit_rate({1, 2, 3}, {1, 2}), InvalidArgument);
}

TEST_CASE("mean and standard error") {
  const MeanStd m = mean_and_std_error({1.0, 2.0, 3.0, 4.0});
  CHECK(m.mean == 2.5);
  CHECK(m.std_error == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
}
