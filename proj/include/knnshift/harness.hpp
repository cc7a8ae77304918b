#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "knnshift/datagen.hpp"
#include "knnshift/estimators.hpp"
#include "knnshift/geometry.hpp"
#include "knnshift/stats.hpp"

namespace knnshift {

// ---------------------------------------------------------------------------
// Rate sweeps
// ---------------------------------------------------------------------------

enum class MethodKind { csa, weight, poly, no_correction, oracle_y };
std::string to_string(MethodKind kind);
MethodKind parse_method_kind(const std::string& name);

struct KPolicy {
  enum class Kind { constant, d_plus_5, poly_lb, power };
  Kind kind = Kind::constant;
  std::size_t value = 1;  // constant
  double alpha = 0.5;     // power: k = ceil(n^alpha)

  std::size_t resolve(std::size_t d, std::size_t n) const;
  static KPolicy parse(const std::string& name);
};

struct MethodSpec {
  std::string label;
  MethodKind kind = MethodKind::weight;
  KPolicy k;
  unsigned order = 0;
  CsaMode csa_mode = CsaMode::sampled;
  LocalPolyOptions poly;
};

/// Named roster entries: 1NN-CSA, 1NN-W, kNN-Poly-LB (L = 1, k = 2d^2+3d+3),
/// kNN-Poly-d+5 (L = 1, k = d+5, permissive), NoCorrection, OracleY.
MethodSpec roster_method(const std::string& name);
std::vector<std::string> roster_names();

struct SweepConfig {
  SetupSpec setup = make_setup("TN0.5-Cubic", 1);  // dim is overridden per entry of `dims`
  std::vector<std::size_t> dims{1};
  std::vector<std::size_t> n_grid{500, 1000, 2000, 4000, 8000, 16000};
  double m_ratio = 1.0;  // m = round(m_ratio * n)
  std::vector<MethodSpec> methods;
  std::size_t reps = 200;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: default_threads()

  void validate() const;
};

struct SweepRow {
  std::string method;
  std::size_t d = 0, n = 0, k = 0;
  unsigned L = 0;
  std::size_t replication = 0;
  double estimate = 0.0, oracle = 0.0, error = 0.0;
};

struct SweepAggregate {
  std::string method;
  std::size_t d = 0, n = 0;
  double bias = 0.0, variance = 0.0, rmse = 0.0;
  double std_error = 0.0;  // standard error of the RMSE
  std::size_t valid_reps = 0;
};

struct InvalidCell {
  std::string method;
  std::size_t d = 0, n = 0;
  std::string reason;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepAggregate> aggregates;
  std::vector<InvalidCell> invalid;

  std::string results_csv() const;     // method,d,n,k,L,replication,estimate,oracle,error
  std::string aggregates_csv() const;  // method,d,n,bias,variance,rmse,stderr
  const SweepAggregate* find(const std::string& method, std::size_t d, std::size_t n) const;
};

/// Empty when the method can run at (d, n) with this k, otherwise the reason.
std::string method_precondition(const MethodSpec& method, std::size_t d, std::size_t n, std::size_t k);

/// One estimate of e(h) on a drawn setup. The randomized CSA uses the
/// substream derive_seed(data_seed, label_hash(label)), as in run_sweep.
double run_method(const MethodSpec& method, const SetupDraw& draw, const HFunction& h, std::size_t k,
                  std::uint64_t data_seed);

/// Every method sees the same draws in a replication; the randomized CSA
/// draws from a substream keyed by the method label, so method order does
/// not affect any estimate.
SweepResult run_sweep(const SweepConfig& config);

/// Bias, population variance, RMSE = sqrt(bias^2 + variance) and the
/// delta-method standard error of the RMSE. Non-finite errors are skipped.
SweepAggregate aggregate_errors(const std::vector<double>& errors);

// ---------------------------------------------------------------------------
// Verifiers
// ---------------------------------------------------------------------------

struct TailRow {
  double at = 0.0;
  double empirical = 0.0;
  double bound = 0.0;
};

/// Order statistics of the k-NN radius at x for P = U[0, 1].
struct TauLawConfig {
  std::size_t n = 50, k = 1;
  double x = 0.5;
  std::size_t reps = 5000;
  std::vector<double> a_grid{0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
  double c = 0.5;  // ball-ratio constant of [0, 1]
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct TauLawReport {
  KsResult ks;                // F_x(tau_k) against Beta(k, n - k + 1)
  double mean_tau = 0.0, mean_std_error = 0.0;
  double exact_mean = 0.0;    // E[tau_k(x)], integral of the binomial survival
  double moment_bound = 0.0;  // lambda = 1
  std::vector<TailRow> tail;
  bool tail_ok = true;
};

TauLawReport verify_tau_laws(const TauLawConfig& config);

/// F_x(r) = |[x - r, x + r] ∩ [0, 1]|.
double uniform_ball_mass(double x, double r);
/// E[tau_k(x)] for n uniform points on [0, 1].
double exact_mean_knn_radius(double x, std::size_t n, std::size_t k);

struct NegativeCorrelationReport {
  std::size_t cells_checked = 0;
  std::size_t violations = 0;
  double max_excess = 0.0;  // max of LHS - RHS
};

/// Exhaustive trinomial check of P(N_A <= l, N_B <= l') <= P(N_A <= l) P(N_B <= l')
/// over all (l, l') in {0..n}^2.
NegativeCorrelationReport verify_negative_correlation(double p_a, double p_b, std::size_t n,
                                                      double tol = 1e-14);

/// P = Q uniform on [0, 1]^d.
struct CatchmentTailConfig {
  std::size_t dim = 2, n = 2000, k = 1;
  std::vector<double> t_grid{2, 4, 8, 16};
  std::size_t reps = 2000;
  std::size_t inner_mc = 4000;
  double c = 0.25;  // ball-ratio constant of the unit square
  double p_inf = 1.0, q_bar = 1.0;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct CatchmentTailReport {
  std::vector<TailRow> tail;  // survival of n Q(A_k(X_1)) / k
  bool bound_ok = true;
  double mean_normalized = 0.0, mean_std_error = 0.0;
};

CatchmentTailReport verify_catchment_tail(const CatchmentTailConfig& config);

/// d = 1, P = U[p_lo, p_hi], Q = U[q_lo, q_hi] strictly inside.
struct BiasExpansionConfig {
  double p_lo = 0.0, p_hi = 1.0, q_lo = 0.25, q_hi = 0.75;
  std::function<double(double)> g = [](double x) { return x * x; };
  std::function<double(double)> dg = [](double x) { return 2.0 * x; };
  std::function<double(double)> d2g = [](double) { return 2.0; };
  std::size_t k = 1;
  std::vector<std::size_t> n_grid{2000, 8000};
  std::size_t reps = 20000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct BiasExpansionRow {
  std::size_t n = 0;
  double mean_bias = 0.0, std_error = 0.0;
  double scaled = 0.0, scaled_std_error = 0.0;  // n^2 * mean bias
  double ratio = 0.0;                            // scaled / theoretical
};

struct BiasExpansionReport {
  BiasConstant theoretical;
  std::vector<BiasExpansionRow> rows;
};

/// Exact conditional bias E[e_2 | X_1..X_n] - e of the weighting estimator
/// for d = 1 and Q = U[q_lo, q_hi]: the k-NN set of x is a window of
/// consecutive order statistics, so the bias is a sum of integrals of
/// (window mean of g) - g over the window's cell.
double conditional_bias_1d(std::vector<double> x, std::size_t k,
                           const std::function<double(double)>& g, double q_lo, double q_hi);

BiasExpansionReport verify_bias_expansion(const BiasExpansionConfig& config);

struct AteNormalityConfig {
  ATEDGPSpec dgp = default_ate_dgp();
  std::size_t n = 5000;
  double k_exponent = 0.3;  // k = ceil(N^k_exponent)
  std::optional<std::size_t> k_fixed;
  std::size_t reps = 500;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct AteNormalityReport {
  bool skipped = false;
  std::string note;
  std::size_t k = 0;
  double tau = 0.0, sigma2 = 0.0;
  double coverage = 0.0;
  Interval coverage_ci;
  double mean_error = 0.0;
  double sd_scaled = 0.0;  // sd of sqrt(N) (mu_hat - tau)
};

/// Coverage of mu_hat +- 1.96 sigma / sqrt(N). Skipped outside d <= 3 with
/// diverging k.
AteNormalityReport verify_ate_normality(const AteNormalityConfig& config);

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

struct GeometryConfig {
  std::vector<double> L_grid{1e2, 1e3, 1e4, 1e5, 1e6, 1e7};
  std::vector<double> eps_grid{1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
  std::vector<double> r_grid;  // empty: geometric grid on (0, diameter]
  std::size_t n_mc = 1'000'000;
  std::size_t n_centers = 200;
  std::size_t x2_mc = 4000;
  std::vector<Point> extra_centers;
  std::uint64_t seed = 1;
};

struct GeometryReport {
  ConditionReport condition_a;
  TubeReport tube;
  BallRatioReport x2;
  bool consistent = false;  // tube verdict == (A) verdict
};

/// (A), (X2) and tube-mass checks with Q uniform on the domain.
GeometryReport check_geometry(const DomainPtr& domain, const GeometryConfig& config);

std::vector<double> default_radius_grid(const Domain& domain, std::size_t count = 12);

}  // namespace knnshift
