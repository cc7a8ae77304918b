#include <cmath>

#include "doctest.h"
#include "knnshift/estimators.hpp"

using namespace knnshift;

namespace {

LabeledSample two_points() { return {PointSet(1, {0.0, 1.0}), {2.0, 5.0}}; }

LabeledSample random_sample(Rng& rng, std::size_t n, std::size_t d) {
  LabeledSample s{PointSet(d, std::vector<double>(n * d)), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    auto x = s.covariates.mutable_row(i);
    for (auto& v : x) v = uniform01(rng);
    s.labels[i] = std::sin(3.0 * x[0]) + 0.1 * standard_normal(rng);
  }
  return s;
}

PointSet random_targets(Rng& rng, std::size_t m, std::size_t d) {
  std::vector<double> f(m * d);
  for (auto& v : f) v = uniform01(rng);
  return PointSet(d, f);
}

}  // namespace

TEST_CASE("weighting estimator") {
  CHECK(estimate_weight(two_points(), PointSet(1, {0.4}), HFunction::label(), 1) == 2.0);
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto src = random_sample(rng, 80, 3);
    const auto tgt = random_targets(rng, 37, 3);
    CHECK(estimate_weight(src, tgt, HFunction::constant(0.1), 3) == 0.1);
    CHECK(estimate_weight(src, tgt, HFunction::constant(1.0), 7) == 1.0);
  }
  CHECK_THROWS_AS(estimate_weight(two_points(), PointSet(1, {0.4}), HFunction::label(), 3), InvalidArgument);
  CHECK_THROWS_AS(estimate_weight(two_points(), PointSet(1), HFunction::label(), 1), InvalidArgument);
  CHECK_THROWS_AS(estimate_weight(two_points(), PointSet(2, {0.4, 0.1}), HFunction::label(), 1), InvalidArgument);
  LabeledSample bad = two_points();
  bad.labels[1] = std::nan("");
  CHECK_THROWS_AS(estimate_weight(bad, PointSet(1, {0.4}), HFunction::label(), 1), InvalidArgument);
}

TEST_CASE("conditional sampling estimator") {
  const HFunction xy{[](PointView x, double y) { return x[0] + y; }, "x_plus_y"};
  CHECK(estimate_csa(two_points(), PointSet(1, {0.4}), xy, 2, 1, CsaMode::conditional_mean) ==
        doctest::Approx(3.9).epsilon(1e-15));
  Rng rng(2);
  const auto src = random_sample(rng, 120, 2);
  const auto tgt = random_targets(rng, 40, 2);
  CHECK(estimate_csa(src, tgt, HFunction::constant(0.3), 4, 9, CsaMode::sampled) == 0.3);
  CHECK(estimate_csa(src, tgt, HFunction::constant(0.3), 4, 9, CsaMode::conditional_mean) == 0.3);

  // h = y: conditional mean equals the average kNN label mean
  const NNIndex idx(src.covariates);
  double want = 0.0;
  for (std::size_t j = 0; j < tgt.size(); ++j) {
    double s = 0.0;
    for (auto i : idx.knn_indices(tgt[j], 5)) s += src.labels[i];
    want += s / 5.0;
  }
  want /= static_cast<double>(tgt.size());
  CHECK(estimate_csa(src, tgt, HFunction::label(), 5, 0, CsaMode::conditional_mean) ==
        doctest::Approx(want).epsilon(1e-13));
  CHECK(estimate_local_poly(src, tgt, HFunction::label(), 5, 0).estimate == doctest::Approx(want).epsilon(1e-13));

  // the sampled mode averages to the conditional mean
  const std::size_t R = 10000;
  double s = 0.0, s2 = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    const double v = estimate_csa(src, idx, tgt, HFunction::label(), 5, derive_seed(77, r));
    s += v;
    s2 += v * v;
  }
  const double mean = s / R, se = std::sqrt((s2 / R - mean * mean) / (R - 1));
  CHECK(std::abs(mean - want) <= 4.0 * se);
  // determinism
  CHECK(estimate_csa(src, idx, tgt, HFunction::label(), 5, 42) == estimate_csa(src, idx, tgt, HFunction::label(), 5, 42));
}

TEST_CASE("local polynomial regression") {
  const LabeledSample s{PointSet(1, {0.0, 0.1, 0.2}), {1.0, 2.0, 3.0}};
  CHECK(local_poly_regress(s, Point{0.1}, 3, MultiIndexBasis(1, 1), HFunction::label()) ==
        doctest::Approx(2.0).epsilon(1e-13));
  CHECK_THROWS_AS(local_poly_regress(s, Point{0.1}, 1, MultiIndexBasis(1, 1), HFunction::label()), InvalidArgument);

  // duplicated points: the moment matrix is singular
  const LabeledSample dup{PointSet(1, {0.5, 0.5, 0.5, 0.5}), {1.0, 2.0, 3.0, 4.0}};
  CHECK_THROWS_AS(local_poly_regress(dup, Point{0.2}, 4, MultiIndexBasis(1, 1), HFunction::label()), DegenerateFit);
  const LabeledSample collinear{PointSet(2, {0, 0, 1, 0, 2, 0, 3, 0}), {1, 2, 3, 4}};
  try {
    local_poly_regress(collinear, Point{0.5, 0.5}, 4, MultiIndexBasis(2, 1), HFunction::label());
    FAIL("expected a degenerate fit");
  } catch (const DegenerateFit& e) {
    CHECK(std::string(e.what()).find("(0.5, 0.5)") != std::string::npos);
  }

  // guaranteed mode refuses k below the minimum, permissive accepts it
  Rng rng(3);
  const auto src = random_sample(rng, 200, 2);
  const auto tgt = random_targets(rng, 10, 2);
  CHECK_THROWS_AS(estimate_local_poly(src, tgt, HFunction::label(), 7, 1), InvalidArgument);
  LocalPolyOptions permissive;
  permissive.permissive = true;
  CHECK(std::isfinite(estimate_local_poly(src, tgt, HFunction::label(), 7, 1, permissive).estimate));

  // fallback counts degenerate targets
  LabeledSample line{PointSet(2, std::vector<double>(2 * 30)), std::vector<double>(30, 1.0)};
  for (std::size_t i = 0; i < 30; ++i) line.covariates.mutable_row(i)[0] = i / 30.0;
  LocalPolyOptions fb;
  fb.permissive = true;
  fb.fallback_to_mean = true;
  const auto r = estimate_local_poly(line, PointSet(2, {0.5, 0.5, 0.2, 0.1}), HFunction::label(), 5, 1, fb);
  CHECK(r.fallback_count == 2);
  CHECK(r.estimate == 1.0);
  fb.fallback_to_mean = false;
  CHECK_THROWS_AS(estimate_local_poly(line, PointSet(2, {0.5, 0.5}), HFunction::label(), 5, 1, fb), DegenerateFit);
}

TEST_CASE("noiseless linear g is recovered exactly with L = 1") {
  Rng rng(4);
  const std::size_t d = 2, n = 400;
  LabeledSample src{PointSet(d, std::vector<double>(n * d)), std::vector<double>(n)};
  auto g = [](PointView x) { return 1.5 - 2.0 * x[0] + 0.5 * x[1]; };
  for (std::size_t i = 0; i < n; ++i) {
    auto x = src.covariates.mutable_row(i);
    for (auto& v : x) v = uniform01(rng);
    src.labels[i] = g(x);
  }
  const auto tgt = random_targets(rng, 50, d);
  double want = 0.0;
  for (std::size_t j = 0; j < tgt.size(); ++j) want += g(tgt[j]);
  want /= 50.0;
  const std::size_t k = min_neighbours(MultiIndexBasis(d, 1));
  CHECK(estimate_local_poly(src, tgt, HFunction::label(), k, 1).estimate == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("treatment effects") {
  ATESample hand;
  hand.covariates = PointSet(1, {0.0, 1.0, 0.1, 0.9});
  hand.outcomes = {3.0, 5.0, 1.0, 2.0};
  hand.treated = {true, true, false, false};
  const AteResult r = estimate_ate(hand, 1);
  CHECK(r.ate == 2.5);
  CHECK(r.ate_imputation == 2.5);
  CHECK(r.match_counts == std::vector<std::size_t>{1, 1, 1, 1});
  // ATT: (1/2)[(3 + 5) - (1*1 + 1*2)] = 2.5
  CHECK(r.att == 2.5);
  CHECK(estimate_att(hand, 1) == 2.5);
  CHECK(estimate_ate_local_poly(hand, 1, 0, {true, false}).estimate == doctest::Approx(r.ate_imputation).epsilon(1e-15));

  ATESample cst = hand;
  cst.outcomes = {0.7, 0.7, 0.7, 0.7};
  CHECK(estimate_ate(cst, 2).ate == 0.0);
  CHECK(estimate_ate(cst, 2).att == 0.0);

  ATESample one_arm = hand;
  one_arm.treated = {true, true, true, true};
  CHECK_THROWS_AS(estimate_ate(one_arm, 1), InvalidArgument);
  CHECK_THROWS_AS(estimate_ate(hand, 3), InvalidArgument);
}

TEST_CASE("local polynomial ATE recovers linear arms") {
  Rng rng(6);
  const std::size_t N = 600, d = 2;
  ATESample s;
  s.covariates = PointSet(d, std::vector<double>(N * d));
  s.outcomes.resize(N);
  s.treated.resize(N);
  auto g0 = [](PointView x) { return x[0] - x[1]; };
  auto g1 = [](PointView x) { return 2.0 + 3.0 * x[0]; };
  double want = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    auto x = s.covariates.mutable_row(i);
    for (auto& v : x) v = uniform01(rng);
    s.treated[i] = uniform01(rng) < 0.5;
    s.outcomes[i] = s.treated[i] ? g1(x) : g0(x);
    want += g1(x) - g0(x);
  }
  want /= static_cast<double>(N);
  CHECK(estimate_ate_local_poly(s, 16, 1).estimate == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("bias constant") {
  CHECK(bias_gamma_factor(1, 2) == doctest::Approx(1.0));
  CHECK(bias_gamma_factor(1, 1) == doctest::Approx(2.0));
  // k = 2, d = 1: (Gamma(3)/Gamma(1) + Gamma(4)/Gamma(2)) / 2 = (2 + 6) / 2
  CHECK(bias_gamma_factor(2, 1) == doctest::Approx(4.0));
  for (std::size_t k = 1; k <= 20; ++k)
    for (std::size_t d = 1; d <= 2; ++d) CHECK(bias_gamma_factor(k, d) >= 1.0);
  CHECK(bias_gamma_factor(1, 3) == doctest::Approx(std::tgamma(1.0 + 2.0 / 3.0)));
  CHECK(unit_ball_volume(1) == doctest::Approx(2.0));
  CHECK(unit_ball_volume(2) == doctest::Approx(3.141592653589793));
  CHECK(unit_ball_volume(3) == doctest::Approx(4.0 * 3.141592653589793 / 3.0));

  const DensitySpec p{[](PointView) { return 1.0; }, [](PointView) { return Point{0.0}; }};
  const TargetSpec q{[](PointView) { return 2.0; }, Point{0.25}, Point{0.75}, {}};
  const SmoothFunctionSpec g{[](PointView x) { return Point{2.0 * x[0]}; },
                             [](PointView) { return std::vector<Point>{Point{2.0}}; }};
  CHECK(theoretical_bias_constant(p, q, g, 1, 1, 0).value == doctest::Approx(0.5).epsilon(1e-12));

  const SmoothFunctionSpec lin{[](PointView) { return Point{1.0, -1.0}; },
                               [](PointView) { return std::vector<Point>{Point{0, 0}, Point{0, 0}}; }};
  const DensitySpec p2{[](PointView) { return 1.0; }, [](PointView) { return Point{0.0, 0.0}; }};
  const TargetSpec q2{[](PointView) { return 4.0; }, Point{0.25, 0.25}, Point{0.75, 0.75}, {}};
  CHECK(theoretical_bias_constant(p2, q2, lin, 3, 2, 0).value == doctest::Approx(0.0));

  // d = 3 Monte Carlo path, constant integrand: exact up to roundoff
  const DensitySpec p3{[](PointView) { return 1.0; }, [](PointView) { return Point{0, 0, 0}; }};
  const SmoothFunctionSpec quad{[](PointView x) { return Point{2 * x[0], 2 * x[1], 2 * x[2]}; },
                                [](PointView) {
                                  return std::vector<Point>{Point{2, 0, 0}, Point{0, 2, 0}, Point{0, 0, 2}};
                                }};
  TargetSpec q3;
  q3.sampler = [](Rng& r) { return Point{0.25 + 0.5 * uniform01(r), 0.5, 0.5}; };
  const auto c3 = theoretical_bias_constant(p3, q3, quad, 1, 3, 1000);
  const double want = std::tgamma(1.0 + 2.0 / 3.0) * std::pow(unit_ball_volume(3), -2.0 / 3.0) * 1.0;
  CHECK(c3.value == doctest::Approx(want).epsilon(1e-12));

  const DensitySpec zero{[](PointView) { return 0.0; }, [](PointView) { return Point{0.0}; }};
  CHECK_THROWS_AS(theoretical_bias_constant(zero, q, g, 1, 1, 0), InvalidArgument);
}

TEST_CASE("psi trace agrees with a sphere average") {
  // Psi = mean over theta of theta^T (grad g grad p^T / p + H / 2) theta
  const DensitySpec p{[](PointView x) { return 1.0 + x[0] * x[1]; },
                      [](PointView x) { return Point{x[1], x[0]}; }};
  const SmoothFunctionSpec g{[](PointView x) { return Point{std::cos(x[0]), 2.0 * x[1]}; },
                             [](PointView x) {
                               return std::vector<Point>{Point{-std::sin(x[0]), 0.0}, Point{0.0, 2.0}};
                             }};
  const Point x{0.3, 0.6};
  const double px = p.density(x);
  const Point gp = p.gradient(x), gg = g.gradient(x);
  const auto H = g.hessian(x);
  double avg = 0.0;
  const int M = 3600;
  for (int i = 0; i < M; ++i) {
    const double a = 2.0 * 3.141592653589793 * (i + 0.5) / M;
    const double th[2] = {std::cos(a), std::sin(a)};
    double v = 0.0;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) v += th[r] * (gg[r] * gp[c] / px + 0.5 * H[r][c]) * th[c];
    avg += v / M;
  }
  CHECK(psi_trace(p, g, x) == doctest::Approx(avg).epsilon(1e-12));
}

TEST_CASE("semiparametric variance") {
  AteMoments m;
  m.propensity = [](PointView) { return 0.5; };
  m.g0 = [](PointView) { return 1.0; };
  m.g1 = [](PointView) { return 1.0; };
  m.sigma0 = [](PointView) { return 0.7; };
  m.sigma1 = [](PointView) { return 0.7; };
  m.uniform_interval = std::make_pair(0.0, 1.0);
  CHECK(semiparametric_variance(m, 0.0, 0) == doctest::Approx(4.0 * 0.49));

  m.sigma0 = m.sigma1 = [](PointView) { return 0.0; };
  m.g1 = [](PointView) { return 3.0; };
  CHECK(semiparametric_variance(m, 2.0, 0) == doctest::Approx(0.0));

  m.propensity = [](PointView x) { return x[0]; };
  m.overlap_margin = 0.05;
  CHECK_THROWS_AS(semiparametric_variance(m, 2.0, 0), InvalidArgument);
}
