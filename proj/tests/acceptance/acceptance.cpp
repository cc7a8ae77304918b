// Acceptance suite: one PASS/FAIL line per criterion.
//   knnshift_acceptance            run all criteria
//   knnshift_acceptance 5 9        run the listed criteria
// Exit status is non-zero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "knnshift/datagen.hpp"
#include "knnshift/estimators.hpp"
#include "knnshift/geometry.hpp"
#include "knnshift/harness.hpp"
#include "knnshift/knn.hpp"
#include "knnshift/polybasis.hpp"

using namespace knnshift;

namespace {

constexpr std::uint64_t kSeed = 20240917;

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;

  void check(bool ok, const std::string& what) {
    lines.push_back(std::string(ok ? "    ok   " : "    FAIL ") + what);
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Independent linear-scan oracle: sort by (squared distance, index).
std::vector<std::pair<double, std::size_t>> scan(const PointSet& pts, PointView x, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double t = x[j] - pts[i][j];
      s += t * t;
    }
    all.emplace_back(s, i);
  }
  std::sort(all.begin(), all.end());
  all.resize(k);
  return all;
}

PointSet random_points(Rng& rng, std::size_t n, std::size_t d, bool coarse) {
  std::vector<double> flat(n * d);
  for (auto& v : flat) {
    v = uniform01(rng);
    if (coarse) v = std::floor(v * 4.0) / 4.0;  // forces duplicates and ties
  }
  return PointSet(d, std::move(flat));
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
}

// ---------------------------------------------------------------------------

Outcome c1_weight_normalization() {
  Outcome o;
  Rng rng(derive_seed(kSeed, 1));
  std::size_t bad_sum = 0, bad_weight = 0, bad_member = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = pick(rng, 1, 5), n = pick(rng, 1, 500), m = pick(rng, 1, 500);
    const std::size_t k = pick(rng, 1, std::min<std::size_t>(10, n));
    const bool coarse = t % 4 == 0;
    LabeledSample src{random_points(rng, n, d, coarse), std::vector<double>(n)};
    for (auto& y : src.labels) y = standard_normal(rng);
    const PointSet tgt = random_points(rng, m, d, coarse);
    const NNIndex index(src.covariates);
    const CatchmentProfile prof = catchment_counts(index, tgt, k);
    const std::size_t total = std::accumulate(prof.counts.begin(), prof.counts.end(), std::size_t{0});
    if (total != m * k) ++bad_sum;
    if (estimate_weight(src, index, tgt, HFunction::constant(1.0), k) != 1.0) ++bad_weight;
    if (!coarse && t % 10 == 1) {
      // membership form on tie-free instances
      std::vector<std::size_t> counts(n, 0);
      for (std::size_t j = 0; j < m; ++j)
        for (const auto& [sq, i] : scan(src.covariates, tgt[j], k)) ++counts[i];
      if (counts != prof.counts) ++bad_member;
    }
  }
  o.check(bad_sum == 0, "sum of catchment counts == m*k on 1000 instances (" + std::to_string(bad_sum) + " bad)");
  o.check(bad_weight == 0, "estimate_weight(h=1) == 1 exactly (" + std::to_string(bad_weight) + " bad)");
  o.check(bad_member == 0, "counts equal the linear-scan oracle (" + std::to_string(bad_member) + " bad)");
  return o;
}

Outcome c2_knn_oracle() {
  Outcome o;
  Rng rng(derive_seed(kSeed, 2));
  std::size_t bad = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = pick(rng, 1, 5), n = pick(rng, 1, 200), k = pick(rng, 1, n);
    const PointSet pts = random_points(rng, n, d, t % 3 == 0);
    Point x(d);
    for (auto& v : x) v = t % 3 == 0 ? std::floor(uniform01(rng) * 4.0) / 4.0 : uniform01(rng);
    const NNIndex index(pts);
    const auto want = scan(pts, x, k);
    const auto got = index.knn(x, k);
    bool ok = got.size() == k;
    for (std::size_t i = 0; ok && i < k; ++i)
      ok = got[i].index == want[i].second && got[i].squared_distance == want[i].first;
    ok = ok && index.knn_radius(x, k) == std::sqrt(want.back().first);
    if (!ok) ++bad;
  }
  o.check(bad == 0, "index == linear scan on 200 random triples (" + std::to_string(bad) + " mismatches)");
  return o;
}

Outcome c3_local_poly() {
  Outcome o;
  Rng rng(derive_seed(kSeed, 3));
  double worst_mean = 0.0, worst_repro = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = pick(rng, 1, 3);
    const unsigned L = static_cast<unsigned>(pick(rng, 0, 2));
    const MultiIndexBasis basis(d, L);
    const std::size_t k = min_neighbours(basis);
    const std::size_t n = k + 50;
    LabeledSample src{random_points(rng, n, d, false), std::vector<double>(n)};
    // q(z) = sum_lambda c_lambda z^lambda, total degree <= L
    std::vector<double> coef(basis.size());
    for (auto& c : coef) c = standard_normal(rng);
    auto q = [&](PointView z) {
      double s = 0.0;
      for (std::size_t j = 0; j < basis.size(); ++j) {
        double mono = 1.0;
        for (std::size_t a = 0; a < d; ++a) mono *= std::pow(z[a], basis.indices()[j][a]);
        s += coef[j] * mono;
      }
      return s;
    };
    for (std::size_t i = 0; i < n; ++i) src.labels[i] = q(src.covariates[i]);
    Point x(d);
    for (auto& v : x) v = 0.2 + 0.6 * uniform01(rng);
    const NNIndex index(src.covariates);
    const double fit = local_poly_regress(src, index, x, k, basis, HFunction::label());
    worst_repro = std::max(worst_repro, std::abs(fit - q(x)));

    const MultiIndexBasis flat(d, 0);
    const std::size_t k0 = pick(rng, 1, n);
    double mean = 0.0;
    for (const auto& [sq, i] : scan(src.covariates, x, k0)) mean += src.labels[i];
    mean /= static_cast<double>(k0);
    worst_mean = std::max(worst_mean, std::abs(local_poly_regress(src, index, x, k0, flat, HFunction::label()) - mean));
  }
  o.check(worst_mean <= 1e-10, fmt("L=0 equals the kNN mean: max |diff| = %.3g (tol 1e-10)", worst_mean));
  o.check(worst_repro <= 1e-8, fmt("degree-<=L labels reproduced: max |diff| = %.3g (tol 1e-8)", worst_repro));
  return o;
}

Outcome c4_ate_identity() {
  Outcome o;
  Rng rng(derive_seed(kSeed, 4));
  double worst = 0.0, worst_oracle = 0.0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t d = pick(rng, 1, 4), N = pick(rng, 4, 300);
    ATESample s;
    s.covariates = random_points(rng, N, d, t % 5 == 0);
    s.outcomes.resize(N);
    s.treated.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      s.treated[i] = i < 2 ? i == 0 : uniform01(rng) < 0.5;
      s.outcomes[i] = 3.0 * standard_normal(rng) + 10.0 * s.covariates[i][0];
    }
    const std::size_t k = pick(rng, 1, std::min(s.n_treated(), s.n_control()));
    const AteResult r = estimate_ate(s, k);
    worst = std::max({worst, std::abs(r.ate - r.ate_imputation), std::abs(r.att - r.att_imputation)});

    // brute-force imputation oracle
    PointSet arm[2] = {PointSet(d), PointSet(d)};
    std::vector<std::size_t> ids[2];
    for (std::size_t i = 0; i < N; ++i) {
      arm[s.treated[i]].push_back(s.covariates[i]);
      ids[s.treated[i]].push_back(i);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const int other = s.treated[i] ? 0 : 1;
      double imp = 0.0;
      for (const auto& [sq, j] : scan(arm[other], s.covariates[i], k)) imp += s.outcomes[ids[other][j]];
      acc += (s.treated[i] ? 1.0 : -1.0) * (s.outcomes[i] - imp / static_cast<double>(k));
    }
    worst_oracle = std::max(worst_oracle, std::abs(acc / static_cast<double>(N) - r.ate));
  }
  o.check(worst <= 1e-10, fmt("weighting vs imputation forms on 500 instances: max |diff| = %.3g (tol 1e-10)", worst));
  o.check(worst_oracle <= 1e-10, fmt("brute-force matching oracle: max |diff| = %.3g (tol 1e-10)", worst_oracle));

  ATESample hand;
  hand.covariates = PointSet(1, {0.0, 1.0, 0.1, 0.9});
  hand.outcomes = {3.0, 5.0, 1.0, 2.0};
  hand.treated = {true, true, false, false};
  const double mu = estimate_ate(hand, 1).ate;
  o.check(mu == 2.5, fmt("hand example: mu_hat = %.17g (expected 2.5 exactly)", mu));
  return o;
}

Outcome c5_beta_law() {
  Outcome o;
  const std::pair<std::size_t, std::size_t> cases[] = {{50, 1}, {50, 5}, {500, 10}};
  for (const auto& [n, k] : cases) {
    TauLawConfig cfg;
    cfg.n = n;
    cfg.k = k;
    cfg.x = 0.3;
    cfg.reps = 5000;
    cfg.seed = derive_seed(kSeed, 5, n, k);
    const TauLawReport r = verify_tau_laws(cfg);
    o.check(r.ks.p_value > 0.01, "n=" + std::to_string(n) + " k=" + std::to_string(k) +
                                     fmt(": KS D = %.4f, p = %.3f (need p > 0.01)", r.ks.statistic, r.ks.p_value));
  }
  return o;
}

Outcome c6_tau_moments_tail() {
  Outcome o;
  for (std::size_t n : {50, 500}) {
    TauLawConfig cfg;
    cfg.n = n;
    cfg.k = 1;
    cfg.x = 0.5;
    cfg.reps = 20000;
    cfg.seed = derive_seed(kSeed, 6, n);
    const TauLawReport r = verify_tau_laws(cfg);
    const double exact = 1.0 / (2.0 * (static_cast<double>(n) + 1.0));
    const double z = std::abs(r.mean_tau - exact) / r.mean_std_error;
    o.check(z <= 3.0, "n=" + std::to_string(n) +
                          fmt(": mean tau = %.6g vs exact %.6g, |z| = %.2f (need <= 3)", r.mean_tau, exact, z));
    bool ok = r.tail_ok;
    std::string rows;
    for (const auto& t : r.tail) rows += fmt(" a=%.2f:%.3g<=%.3g", t.at, t.empirical, t.bound);
    o.check(ok, "n=" + std::to_string(n) + ": tail bound on a-grid" + rows);
  }
  return o;
}

Outcome c7_negative_correlation() {
  Outcome o;
  Rng rng(derive_seed(kSeed, 7));
  std::size_t violations = 0, cells = 0;
  double worst = -1.0;
  for (int t = 0; t < 100; ++t) {
    // uniform point on the probability simplex
    const double e1 = -std::log(uniform01(rng)), e2 = -std::log(uniform01(rng)), e3 = -std::log(uniform01(rng));
    const double pa = e1 / (e1 + e2 + e3), pb = e2 / (e1 + e2 + e3);
    for (std::size_t n = 1; n <= 6; ++n) {
      const NegativeCorrelationReport r = verify_negative_correlation(pa, pb, n, 1e-14);
      violations += r.violations;
      cells += r.cells_checked;
      worst = std::max(worst, r.max_excess);
    }
  }
  o.check(violations == 0, std::to_string(cells) + " (l, l') cells over 100 triples, n <= 6: " +
                               std::to_string(violations) + fmt(" violations, max LHS-RHS = %.3g", worst));
  return o;
}

Outcome c8_catchment_tail() {
  Outcome o;
  // c: smallest ball ratio of the unit square (a corner quarter-disc).
  BallRatioReport x2 = check_condition_X2(*make_unit_box(2), 0, {0.01, 0.1, 0.5, 1.0}, 20000,
                                          derive_seed(kSeed, 8, 0), {Point{0.0, 0.0}, Point{1.0, 1.0}});
  CatchmentTailConfig cfg;
  cfg.dim = 2;
  cfg.n = 2000;
  cfg.k = 1;
  cfg.t_grid = {2, 4, 8, 16};
  cfg.reps = 2000;
  cfg.inner_mc = 4000;
  cfg.c = x2.min_ratio;
  cfg.seed = derive_seed(kSeed, 8, 1);
  const CatchmentTailReport r = verify_catchment_tail(cfg);
  for (const auto& t : r.tail)
    o.check(t.empirical <= t.bound, fmt("t=%g: survival %.4f <= bound %.4f", t.at, t.empirical, t.bound));
  o.check(r.mean_normalized >= 0.9 && r.mean_normalized <= 1.1,
          fmt("mean n Q(A_1(X_1)) = %.4f +- %.4f (need [0.9, 1.1]); c = %.3f", r.mean_normalized,
              r.mean_std_error, cfg.c));
  return o;
}

Outcome c9_bias_expansion() {
  Outcome o;
  // C_2 for P = U[0,1], Q = U[1/4,3/4], g = x^2, k = 1: Psi = 1, (p |V^1|)^{-2} = 1/4,
  // Gamma(3)/Gamma(1) = 2.
  const double c2 = 2.0 * 0.25 * 1.0;
  BiasExpansionConfig cfg;
  cfg.n_grid = {2000, 8000};
  cfg.reps = 20000;
  cfg.seed = derive_seed(kSeed, 9);
  const BiasExpansionReport r = verify_bias_expansion(cfg);
  o.check(std::abs(r.theoretical.value - c2) < 1e-10,
          fmt("theoretical_bias_constant = %.12g (closed form %.12g)", r.theoretical.value, c2));
  for (const auto& row : r.rows) {
    const double rel = std::abs(row.scaled - c2) / c2;
    const std::string line = "n=" + std::to_string(row.n) +
                             fmt(": n^2 mean(B) = %.4f +- %.4f, rel. dev %.3f", row.scaled,
                                 row.scaled_std_error, rel);
    if (row.n == 8000)
      o.check(rel <= 0.15, line + " (need <= 0.15)");
    else
      o.lines.push_back("    info " + line);
  }
  return o;
}

Outcome c10_rate_sweep() {
  Outcome o;
  SweepConfig cfg;
  cfg.setup = make_setup("TN0.5-Cubic", 1);
  cfg.dims = {1, 5};
  cfg.n_grid = {500, 1000, 2000, 4000, 8000, 16000};
  cfg.methods = {roster_method("1NN-W"), roster_method("1NN-CSA"), roster_method("NoCorrection")};
  cfg.reps = 200;
  cfg.seed = derive_seed(kSeed, 10);
  const SweepResult res = run_sweep(cfg);

  std::vector<double> ns(cfg.n_grid.begin(), cfg.n_grid.end());
  auto slope = [&](const std::string& m, std::size_t d) {
    std::vector<double> e;
    for (auto n : cfg.n_grid) e.push_back(res.find(m, d, n)->rmse);
    return fit_rate(ns, e);
  };
  for (const std::string m : {"1NN-W", "1NN-CSA"}) {
    const RateFit s1 = slope(m, 1), s5 = slope(m, 5);
    o.check(s1.slope >= -0.6 && s1.slope <= -0.4,
            m + fmt(" d=1: slope %.3f +- %.3f (need [-0.6, -0.4])", s1.slope, s1.std_error));
    const double sep = (s5.slope - s1.slope) / std::hypot(s1.std_error, s5.std_error);
    o.check(s5.slope > -0.4 && sep > 3.0,
            m + fmt(" d=5: slope %.3f +- %.3f (need > -0.4), separation %.1f sigma (need > 3)",
                    s5.slope, s5.std_error, sep));
  }
  for (std::size_t d : {1, 5}) {
    const RateFit s = slope("NoCorrection", d);
    o.check(s.slope > -0.1, "NoCorrection d=" + std::to_string(d) +
                                fmt(": slope %.3f +- %.3f (need > -0.1)", s.slope, s.std_error));
  }
  return o;
}

Outcome c11_geometry() {
  Outcome o;
  GeometryConfig cfg;
  cfg.seed = derive_seed(kSeed, 11);

  struct Case {
    std::string name;
    DomainPtr domain;
    bool expect_bounded;
    std::vector<Point> extra;
  };
  const std::vector<Case> cases = {
      {"box d=1", make_unit_box(1), true, {Point{0.0}, Point{1.0}}},
      {"box d=2", make_unit_box(2), true, {Point{0.0, 0.0}, Point{1.0, 0.0}}},
      {"ball d=2", make_ball(Point{0.0, 0.0}, 1.0), true, {Point{1.0, 0.0}, Point{0.0, -1.0}}},
      {"parabola", make_parabola_subgraph(), true, {}},
      {"rings K=50 gap=1e-2", make_ring_union(50, 1e-2), false, {}},
  };
  for (const auto& c : cases) {
    GeometryConfig g = cfg;
    g.extra_centers = c.extra;
    if (c.name.rfind("rings", 0) == 0) g.n_mc = 2'000'000;
    const GeometryReport r = check_geometry(c.domain, g);
    const auto& I = r.condition_a.I_values;
    const std::string curve = fmt(" I(1e2)=%.3f I(1e4)=%.3f", I[0], I[2]) + fmt(" I(max)=%.3f +- %.3f", I.back(), r.condition_a.mc_std_errors.back());
    if (c.expect_bounded)
      o.check(r.condition_a.verdict == Verdict::bounded,
              c.name + ": (A) verdict " + to_string(r.condition_a.verdict) + curve);
    else
      o.check(r.condition_a.verdict == Verdict::diverging,
              c.name + ": (A) verdict " + to_string(r.condition_a.verdict) + curve);
    o.check(r.consistent, c.name + ": tube verdict " + to_string(r.tube.verdict) + " agrees with (A)");

    if (c.name == "parabola") {
      std::vector<Point> spike;
      for (double x : {2e-4, 5e-4, 1e-3}) spike.push_back(Point{x, 0.5 * x * x});
      const BallRatioReport s = check_condition_X2(*c.domain, 0, {1e-3}, 20000, derive_seed(cfg.seed, 99), spike);
      o.check(s.min_ratio <= 0.05, fmt("parabola: X2 ratio at r=1e-3 near the spike = %.4g (need <= 0.05)", s.min_ratio));
    } else if (!c.expect_bounded) {
      const double ratio = I[2] / I[0];
      o.check(ratio > 2.0, fmt("rings: I(1e4)/I(1e2) = %.3f (need > 2)", ratio));
      o.check(r.x2.min_ratio > 0.1, fmt("rings: X2 min ratio = %.3f (need > 0.1)", r.x2.min_ratio));
    } else {
      o.check(r.x2.min_ratio >= 0.4,
              c.name + fmt(": X2 min ratio = %.3f +- %.3f (need >= 0.4)", r.x2.min_ratio, r.x2.std_error) +
                  " at r=" + fmt("%.3g", r.x2.argmin_radius));
    }
  }
  return o;
}

Outcome c12_ate_coverage() {
  Outcome o;
  AteNormalityConfig cfg;
  cfg.dgp = default_ate_dgp(1.0);
  cfg.n = 5000;
  cfg.k_exponent = 0.3;
  cfg.reps = 500;
  cfg.seed = derive_seed(kSeed, 12);
  const AteNormalityReport r = verify_ate_normality(cfg);
  // sigma^2 = int_0^1 [1/e + 1/(1-e) + (x - 1/2)^2] dx with e = 1/4 + x/2: 4 ln 3 + 1/12.
  const double sigma2 = 4.0 * std::log(3.0) + 1.0 / 12.0;
  o.check(std::abs(r.sigma2 - sigma2) < 1e-8, fmt("sigma^2 = %.10f (closed form %.10f)", r.sigma2, sigma2));
  o.check(!r.skipped && r.coverage >= 0.90 && r.coverage <= 0.98,
          fmt("k = %g, coverage = %.3f, 95%% CI [%.3f, ", static_cast<double>(r.k), r.coverage, r.coverage_ci.lo) +
              fmt("%.3f] (need [0.90, 0.98])", r.coverage_ci.hi));
  return o;
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "weight normalization", c1_weight_normalization},
      {2, "kNN oracle equivalence", c2_knn_oracle},
      {3, "local polynomial identities", c3_local_poly},
      {4, "ATE dual-form identity", c4_ate_identity},
      {5, "Beta law of F_x(tau_k)", c5_beta_law},
      {6, "tau moment and tail lemmas", c6_tau_moments_tail},
      {7, "negative correlation lemma", c7_negative_correlation},
      {8, "catchment tail bound", c8_catchment_tail},
      {9, "first-order bias expansion", c9_bias_expansion},
      {10, "rate sweep", c10_rate_sweep},
      {11, "geometry verdicts", c11_geometry},
      {12, "ATE coverage", c12_ate_coverage},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %2d: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.title, secs);
    for (const auto& l : o.lines) std::printf("%s\n", l.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
