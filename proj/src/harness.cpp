#include "knnshift/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "knnshift/format.hpp"

namespace knnshift {

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::csa: return "csa";
    case MethodKind::weight: return "weight";
    case MethodKind::poly: return "poly";
    case MethodKind::no_correction: return "no_correction";
    case MethodKind::oracle_y: return "oracle_y";
  }
  return "?";
}

MethodKind parse_method_kind(const std::string& name) {
  for (MethodKind k : {MethodKind::csa, MethodKind::weight, MethodKind::poly,
                       MethodKind::no_correction, MethodKind::oracle_y})
    if (to_string(k) == name) return k;
  throw InvalidArgument("unknown method '" + name + "'");
}

std::size_t KPolicy::resolve(std::size_t d, std::size_t n) const {
  switch (kind) {
    case Kind::constant: return value;
    case Kind::d_plus_5: return d + 5;
    case Kind::poly_lb: return 2 * d * d + 3 * d + 3;
    case Kind::power:
      return static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), alpha)));
  }
  return value;
}

KPolicy KPolicy::parse(const std::string& name) {
  KPolicy p;
  if (name == "constant") p.kind = Kind::constant;
  else if (name == "d+5") p.kind = Kind::d_plus_5;
  else if (name == "2d^2+3d+3") p.kind = Kind::poly_lb;
  else if (name == "power") p.kind = Kind::power;
  else throw InvalidArgument("unknown k policy '" + name + "'");
  return p;
}

std::vector<std::string> roster_names() {
  return {"1NN-CSA", "1NN-W", "kNN-Poly-LB", "kNN-Poly-d+5", "NoCorrection", "OracleY"};
}

MethodSpec roster_method(const std::string& name) {
  MethodSpec m;
  m.label = name;
  if (name == "1NN-CSA") {
    m.kind = MethodKind::csa;
  } else if (name == "1NN-W") {
    m.kind = MethodKind::weight;
  } else if (name == "kNN-Poly-LB") {
    m.kind = MethodKind::poly;
    m.order = 1;
    m.k.kind = KPolicy::Kind::poly_lb;
  } else if (name == "kNN-Poly-d+5") {
    m.kind = MethodKind::poly;
    m.order = 1;
    m.k.kind = KPolicy::Kind::d_plus_5;
    m.poly.permissive = true;
  } else if (name == "NoCorrection") {
    m.kind = MethodKind::no_correction;
  } else if (name == "OracleY") {
    m.kind = MethodKind::oracle_y;
  } else {
    throw InvalidArgument("unknown roster method '" + name + "'");
  }
  return m;
}

void SweepConfig::validate() const {
  if (dims.empty()) throw InvalidArgument("sweep: dims is empty");
  for (auto d : dims)
    if (d == 0) throw InvalidArgument("sweep: dimensions must be positive");
  if (n_grid.empty()) throw InvalidArgument("sweep: n_grid is empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] == 0) throw InvalidArgument("sweep: n values must be positive");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw InvalidArgument("sweep: n_grid must be increasing");
  }
  if (!(m_ratio > 0.0)) throw InvalidArgument("sweep: m_ratio must be positive");
  if (reps < 2) throw InvalidArgument("sweep: at least 2 replications are required");
  if (methods.empty()) throw InvalidArgument("sweep: no methods");
  for (std::size_t i = 0; i < methods.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (methods[i].label == methods[j].label)
        throw InvalidArgument("sweep: duplicate method label '" + methods[i].label + "'");
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

std::string method_precondition(const MethodSpec& m, std::size_t d, std::size_t n, std::size_t k) {
  if (m.kind == MethodKind::no_correction || m.kind == MethodKind::oracle_y) return {};
  if (k < 1 || k > n) return "k=" + std::to_string(k) + " outside [1, n=" + std::to_string(n) + "]";
  if (m.kind == MethodKind::poly) {
    const MultiIndexBasis basis(d, m.order);
    if (k < basis.size())
      return "k=" + std::to_string(k) + " < K*=" + std::to_string(basis.size());
    if (!m.poly.permissive && k < min_neighbours(basis))
      return "k=" + std::to_string(k) + " below the guaranteed minimum " +
             std::to_string(min_neighbours(basis));
  }
  return {};
}

namespace {

double run_method(const MethodSpec& m, const SetupDraw& draw, const NNIndex* index,
                  const HFunction& h, std::size_t k, std::uint64_t data_seed) {
  switch (m.kind) {
    case MethodKind::weight: return estimate_weight(draw.source, *index, draw.targets, h, k);
    case MethodKind::csa:
      return estimate_csa(draw.source, *index, draw.targets, h, k,
                          derive_seed(data_seed, label_hash(m.label)), m.csa_mode);
    case MethodKind::poly:
      return estimate_local_poly(draw.source, *index, draw.targets, h, k, m.order, m.poly).estimate;
    case MethodKind::no_correction: {
      double s = 0.0;
      for (std::size_t i = 0; i < draw.source.size(); ++i)
        s += h(draw.source.covariates[i], draw.source.labels[i]);
      return s / static_cast<double>(draw.source.size());
    }
    case MethodKind::oracle_y: {
      double s = 0.0;
      for (std::size_t j = 0; j < draw.targets.size(); ++j) s += h(draw.targets[j], draw.target_labels[j]);
      return s / static_cast<double>(draw.targets.size());
    }
  }
  return std::nan("");
}

}  // namespace

double run_method(const MethodSpec& method, const SetupDraw& draw, const HFunction& h, std::size_t k,
                  std::uint64_t data_seed) {
  if (method.kind == MethodKind::no_correction || method.kind == MethodKind::oracle_y)
    return run_method(method, draw, nullptr, h, k, data_seed);
  const NNIndex index(draw.source.covariates);
  return run_method(method, draw, &index, h, k, data_seed);
}

SweepAggregate aggregate_errors(const std::vector<double>& errors) {
  SweepAggregate a;
  std::vector<double> e;
  for (double v : errors)
    if (std::isfinite(v)) e.push_back(v);
  a.valid_reps = e.size();
  if (e.empty()) {
    a.bias = a.variance = a.rmse = a.std_error = std::nan("");
    return a;
  }
  const double r = static_cast<double>(e.size());
  double mean = 0.0;
  for (double v : e) mean += v;
  mean /= r;
  double var = 0.0, msq = 0.0;
  for (double v : e) {
    var += (v - mean) * (v - mean);
    msq += v * v;
  }
  var /= r;
  msq /= r;
  a.bias = mean;
  a.variance = var;
  a.rmse = std::sqrt(mean * mean + var);
  if (e.size() > 1 && a.rmse > 0.0) {
    double v2 = 0.0;
    for (double v : e) v2 += (v * v - msq) * (v * v - msq);
    const double se_mse = std::sqrt(v2 / (r - 1.0) / r);
    a.std_error = se_mse / (2.0 * a.rmse);
  }
  return a;
}

SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::size_t nm = cfg.methods.size(), nd = cfg.dims.size(), nn = cfg.n_grid.size();
  const std::size_t R = cfg.reps;

  std::vector<SetupSpec> specs;
  std::vector<double> oracles;
  for (auto d : cfg.dims) {
    SetupSpec s = cfg.setup;
    s.dim = d;
    specs.push_back(s);
    oracles.push_back(oracle_expectation(s).value);
  }

  // Resolved k and precondition verdict per (method, d, n).
  auto cell = [&](std::size_t mi, std::size_t di, std::size_t ni) { return (mi * nd + di) * nn + ni; };
  std::vector<std::size_t> ks(nm * nd * nn);
  std::vector<std::string> reasons(nm * nd * nn);
  for (std::size_t mi = 0; mi < nm; ++mi)
    for (std::size_t di = 0; di < nd; ++di)
      for (std::size_t ni = 0; ni < nn; ++ni) {
        const auto& m = cfg.methods[mi];
        const std::size_t k = m.k.resolve(cfg.dims[di], cfg.n_grid[ni]);
        ks[cell(mi, di, ni)] = k;
        reasons[cell(mi, di, ni)] = method_precondition(m, cfg.dims[di], cfg.n_grid[ni], k);
      }

  // estimates[cell * R + rep]
  std::vector<double> est(nm * nd * nn * R, std::nan(""));
  std::vector<std::atomic<std::size_t>> degenerate(nm * nd * nn);
  const std::size_t tasks = nd * nn * R;
  parallel_for(tasks, cfg.threads, [&](std::size_t t) {
    const std::size_t rep = t % R, ni = (t / R) % nn, di = t / (R * nn);
    const std::size_t d = cfg.dims[di], n = cfg.n_grid[ni];
    const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.m_ratio * static_cast<double>(n))));
    const std::uint64_t data_seed = derive_seed(cfg.seed, d, n, rep);
    const SetupDraw draw = gen_setup(specs[di], n, m, data_seed);
    const HFunction h = specs[di].h();
    std::optional<NNIndex> index;
    for (std::size_t mi = 0; mi < nm; ++mi) {
      const std::size_t c = cell(mi, di, ni);
      if (!reasons[c].empty()) continue;
      const auto& method = cfg.methods[mi];
      if (!index && (method.kind == MethodKind::csa || method.kind == MethodKind::weight ||
                     method.kind == MethodKind::poly))
        index.emplace(draw.source.covariates);
      try {
        est[c * R + rep] = run_method(method, draw, index ? &*index : nullptr, h, ks[c], data_seed);
      } catch (const DegenerateFit&) {
        ++degenerate[c];
      }
    }
  });

  SweepResult res;
  res.rows.reserve(est.size());
  for (std::size_t mi = 0; mi < nm; ++mi)
    for (std::size_t di = 0; di < nd; ++di)
      for (std::size_t ni = 0; ni < nn; ++ni) {
        const std::size_t c = cell(mi, di, ni);
        const auto& m = cfg.methods[mi];
        std::vector<double> errors(R);
        for (std::size_t rep = 0; rep < R; ++rep) {
          SweepRow row;
          row.method = m.label;
          row.d = cfg.dims[di];
          row.n = cfg.n_grid[ni];
          row.k = ks[c];
          row.L = m.kind == MethodKind::poly ? m.order : 0;
          row.replication = rep;
          row.estimate = est[c * R + rep];
          row.oracle = oracles[di];
          row.error = row.estimate - row.oracle;
          errors[rep] = row.error;
          res.rows.push_back(std::move(row));
        }
        SweepAggregate a = aggregate_errors(errors);
        a.method = m.label;
        a.d = cfg.dims[di];
        a.n = cfg.n_grid[ni];
        res.aggregates.push_back(a);
        if (!reasons[c].empty())
          res.invalid.push_back({m.label, a.d, a.n, reasons[c]});
        else if (degenerate[c] > 0)
          res.invalid.push_back({m.label, a.d, a.n,
                                 "degenerate local fit in " + std::to_string(degenerate[c].load()) +
                                     " replications"});
      }
  return res;
}

std::string SweepResult::results_csv() const {
  std::ostringstream os;
  os << "method,d,n,k,L,replication,estimate,oracle,error\n";
  for (const auto& r : rows)
    os << r.method << ',' << r.d << ',' << r.n << ',' << r.k << ',' << r.L << ',' << r.replication
       << ',' << format_double(r.estimate) << ',' << format_double(r.oracle) << ','
       << format_double(r.error) << '\n';
  return os.str();
}

std::string SweepResult::aggregates_csv() const {
  std::ostringstream os;
  os << "method,d,n,bias,variance,rmse,stderr\n";
  for (const auto& a : aggregates)
    os << a.method << ',' << a.d << ',' << a.n << ',' << format_double(a.bias) << ','
       << format_double(a.variance) << ',' << format_double(a.rmse) << ','
       << format_double(a.std_error) << '\n';
  return os.str();
}

const SweepAggregate* SweepResult::find(const std::string& method, std::size_t d,
                                        std::size_t n) const {
  for (const auto& a : aggregates)
    if (a.method == method && a.d == d && a.n == n) return &a;
  return nullptr;
}

// ---------------------------------------------------------------------------
// k-NN radius laws
// ---------------------------------------------------------------------------

double uniform_ball_mass(double x, double r) {
  if (r <= 0.0) return 0.0;
  return std::max(0.0, std::min(x + r, 1.0) - std::max(x - r, 0.0));
}

double exact_mean_knn_radius(double x, std::size_t n, std::size_t k) {
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("exact_mean_knn_radius: x outside [0, 1]");
  if (k < 1 || k > n) throw InvalidArgument("exact_mean_knn_radius: k out of range");
  // tau = r(U) with U = F_x(tau) ~ Beta(k, n-k+1) and r the inverse of F_x:
  // r(u) = u/2 below u = 2 min(x, 1-x), r(u) = u - min(x, 1-x) above.
  const double a = static_cast<double>(k), b = static_cast<double>(n - k + 1);
  const double m = std::min(x, 1.0 - x), c = 2.0 * m;
  const double mean_u = a / (a + b);
  const double first_moment_below = mean_u * boost::math::ibeta(a + 1.0, b, c);  // E[U; U <= c]
  const double mass_above = boost::math::ibetac(a, b, c);
  return 0.5 * first_moment_below + (mean_u - first_moment_below) - m * mass_above;
}

TauLawReport verify_tau_laws(const TauLawConfig& cfg) {
  if (cfg.k < 1 || cfg.k > cfg.n) throw InvalidArgument("verify_tau_laws: k out of range");
  if (cfg.reps < 2) throw InvalidArgument("verify_tau_laws: need at least 2 replications");
  if (!(cfg.x >= 0.0 && cfg.x <= 1.0)) throw InvalidArgument("verify_tau_laws: x outside [0, 1]");

  std::vector<double> tau(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    Rng rng(derive_seed(cfg.seed, r));
    std::vector<double> pts(cfg.n);
    for (auto& v : pts) v = uniform01(rng);
    const NNIndex index(PointSet(1, std::move(pts)));
    tau[r] = index.knn_radius(Point{cfg.x}, cfg.k);
  });

  TauLawReport rep;
  std::vector<double> u(cfg.reps);
  for (std::size_t r = 0; r < cfg.reps; ++r) u[r] = uniform_ball_mass(cfg.x, tau[r]);
  const double a = static_cast<double>(cfg.k), b = static_cast<double>(cfg.n - cfg.k + 1);
  rep.ks = ks_test(u, [&](double v) { return boost::math::ibeta(a, b, std::clamp(v, 0.0, 1.0)); });

  const MeanStd ms = mean_and_std_error(tau);
  rep.mean_tau = ms.mean;
  rep.mean_std_error = ms.std_error;
  rep.exact_mean = exact_mean_knn_radius(cfg.x, cfg.n, cfg.k);

  // d = 1, p_inf = 1, |V^1| = 2, lambda = 1.
  const double cpv = cfg.c * 1.0 * 2.0;
  const double kn = static_cast<double>(cfg.k) / static_cast<double>(cfg.n + 1);
  rep.moment_bound = 2.0 * boost::math::tgamma(2.0 + 1.0) / cpv * kn;

  for (double at : cfg.a_grid) {
    const auto exceed = std::count_if(tau.begin(), tau.end(), [at](double t) { return t > at; });
    TailRow row;
    row.at = at;
    row.empirical = static_cast<double>(exceed) / static_cast<double>(cfg.reps);
    row.bound = std::exp(0.25) * std::exp(-static_cast<double>(cfg.n) / static_cast<double>(cfg.k) *
                                          cpv * at / 8.0);
    if (row.empirical > row.bound) rep.tail_ok = false;
    rep.tail.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Negative correlation
// ---------------------------------------------------------------------------

NegativeCorrelationReport verify_negative_correlation(double p_a, double p_b, std::size_t n,
                                                      double tol) {
  if (!(p_a >= 0.0 && p_b >= 0.0 && p_a + p_b <= 1.0 + 1e-15))
    throw InvalidArgument("verify_negative_correlation: invalid cell probabilities");
  if (n > 60) throw InvalidArgument("verify_negative_correlation: n too large for enumeration");
  const double p_c = std::max(0.0, 1.0 - p_a - p_b);

  // joint[a][b] = P(N_A = a, N_B = b)
  std::vector<double> lf(n + 1, 0.0);
  for (std::size_t i = 1; i <= n; ++i) lf[i] = lf[i - 1] + std::log(static_cast<double>(i));
  auto pw = [](double p, std::size_t e) { return e == 0 ? 1.0 : std::pow(p, static_cast<double>(e)); };
  std::vector<std::vector<double>> joint(n + 1, std::vector<double>(n + 1, 0.0));
  for (std::size_t a = 0; a <= n; ++a)
    for (std::size_t b = 0; a + b <= n; ++b)
      joint[a][b] = std::exp(lf[n] - lf[a] - lf[b] - lf[n - a - b]) * pw(p_a, a) * pw(p_b, b) *
                    pw(p_c, n - a - b);

  std::vector<double> marg_a(n + 1, 0.0), marg_b(n + 1, 0.0);
  for (std::size_t a = 0; a <= n; ++a)
    for (std::size_t b = 0; a + b <= n; ++b) {
      marg_a[a] += joint[a][b];
      marg_b[b] += joint[a][b];
    }
  std::vector<double> cdf_a(n + 1), cdf_b(n + 1);
  std::partial_sum(marg_a.begin(), marg_a.end(), cdf_a.begin());
  std::partial_sum(marg_b.begin(), marg_b.end(), cdf_b.begin());

  // 2-D prefix sums of the joint law.
  std::vector<std::vector<double>> cum(n + 1, std::vector<double>(n + 1, 0.0));
  for (std::size_t a = 0; a <= n; ++a)
    for (std::size_t b = 0; b <= n; ++b)
      cum[a][b] = joint[a][b] + (a ? cum[a - 1][b] : 0.0) + (b ? cum[a][b - 1] : 0.0) -
                  (a && b ? cum[a - 1][b - 1] : 0.0);

  NegativeCorrelationReport rep;
  rep.max_excess = -1.0;
  for (std::size_t l = 0; l <= n; ++l)
    for (std::size_t lp = 0; lp <= n; ++lp) {
      const double excess = cum[l][lp] - cdf_a[l] * cdf_b[lp];
      ++rep.cells_checked;
      rep.max_excess = std::max(rep.max_excess, excess);
      if (excess > tol) ++rep.violations;
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Catchment tail
// ---------------------------------------------------------------------------

CatchmentTailReport verify_catchment_tail(const CatchmentTailConfig& cfg) {
  if (cfg.dim == 0 || cfg.n == 0) throw InvalidArgument("verify_catchment_tail: empty design");
  if (cfg.k < 1 || cfg.k > cfg.n) throw InvalidArgument("verify_catchment_tail: k out of range");
  if (cfg.reps < 2) throw InvalidArgument("verify_catchment_tail: need at least 2 replications");

  std::vector<double> z(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    Rng rng(derive_seed(cfg.seed, r, 0));
    std::vector<double> flat(cfg.n * cfg.dim);
    for (auto& v : flat) v = uniform01(rng);
    const NNIndex index(PointSet(cfg.dim, std::move(flat)));
    const Point x1(index.points()[0].begin(), index.points()[0].end());
    const MonteCarloEstimate vol = catchment_volume_uniform_box(index, x1, cfg.k, 0.0, 1.0,
                                                                cfg.inner_mc, derive_seed(cfg.seed, r, 1));
    z[r] = static_cast<double>(cfg.n) * vol.value / static_cast<double>(cfg.k);
  });

  CatchmentTailReport rep;
  const MeanStd ms = mean_and_std_error(z);
  rep.mean_normalized = ms.mean;
  rep.mean_std_error = ms.std_error;
  for (double t : cfg.t_grid) {
    const auto exceed = std::count_if(z.begin(), z.end(), [t](double v) { return v >= t; });
    TailRow row;
    row.at = t;
    row.empirical = static_cast<double>(exceed) / static_cast<double>(cfg.reps);
    row.bound = 3.0 * std::exp(0.25) * std::exp(-cfg.c * cfg.p_inf * t / (12.0 * cfg.q_bar));
    if (row.empirical > row.bound) rep.bound_ok = false;
    rep.tail.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Bias expansion
// ---------------------------------------------------------------------------

double conditional_bias_1d(std::vector<double> x, std::size_t k,
                           const std::function<double(double)>& g, double q_lo, double q_hi) {
  const std::size_t n = x.size();
  if (k < 1 || k > n) throw InvalidArgument("conditional_bias_1d: k out of range");
  if (!(q_lo < q_hi)) throw InvalidArgument("conditional_bias_1d: empty target interval");
  std::sort(x.begin(), x.end());
  using GL = boost::math::quadrature::gauss<double, 10>;
  const double qdens = 1.0 / (q_hi - q_lo);

  // Window j = {x_j, ..., x_{j+k-1}} is the k-NN set on
  // ((x_{j-1} + x_{j+k-1}) / 2, (x_j + x_{j+k}) / 2).
  double window = 0.0;
  for (std::size_t i = 0; i < k; ++i) window += g(x[i]);
  double bias = 0.0;
  for (std::size_t j = 0; j + k <= n; ++j) {
    if (j > 0) window += g(x[j + k - 1]) - g(x[j - 1]);
    const double left = j == 0 ? q_lo : std::max(q_lo, 0.5 * (x[j - 1] + x[j + k - 1]));
    const double right = j + k == n ? q_hi : std::min(q_hi, 0.5 * (x[j] + x[j + k]));
    if (right <= left) continue;
    const double gbar = window / static_cast<double>(k);
    bias += GL::integrate([&](double t) { return gbar - g(t); }, left, right) * qdens;
  }
  return bias;
}

BiasExpansionReport verify_bias_expansion(const BiasExpansionConfig& cfg) {
  if (!(cfg.p_lo < cfg.q_lo && cfg.q_lo < cfg.q_hi && cfg.q_hi < cfg.p_hi))
    throw InvalidArgument("verify_bias_expansion: target support must lie inside the source support");
  if (cfg.reps < 2) throw InvalidArgument("verify_bias_expansion: need at least 2 replications");

  BiasExpansionReport rep;
  const double pd = 1.0 / (cfg.p_hi - cfg.p_lo), qd = 1.0 / (cfg.q_hi - cfg.q_lo);
  DensitySpec p{[pd](PointView) { return pd; }, [](PointView) { return Point{0.0}; }};
  TargetSpec q{[qd](PointView) { return qd; }, Point{cfg.q_lo}, Point{cfg.q_hi}, {}};
  SmoothFunctionSpec g{[&](PointView x) { return Point{cfg.dg(x[0])}; },
                       [&](PointView x) { return std::vector<Point>{Point{cfg.d2g(x[0])}}; }};
  rep.theoretical = theoretical_bias_constant(p, q, g, cfg.k, 1, 0);

  for (std::size_t n : cfg.n_grid) {
    if (n < cfg.k) throw InvalidArgument("verify_bias_expansion: n < k");
    std::vector<double> b(cfg.reps);
    parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
      Rng rng(derive_seed(cfg.seed, n, r));
      std::vector<double> x(n);
      for (auto& v : x) v = cfg.p_lo + (cfg.p_hi - cfg.p_lo) * uniform01(rng);
      b[r] = conditional_bias_1d(std::move(x), cfg.k, cfg.g, cfg.q_lo, cfg.q_hi);
    });
    const MeanStd ms = mean_and_std_error(b);
    BiasExpansionRow row;
    row.n = n;
    row.mean_bias = ms.mean;
    row.std_error = ms.std_error;
    const double scale = static_cast<double>(n) * static_cast<double>(n);
    row.scaled = scale * ms.mean;
    row.scaled_std_error = scale * ms.std_error;
    row.ratio = rep.theoretical.value != 0.0 ? row.scaled / rep.theoretical.value : std::nan("");
    rep.rows.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// ATE normality
// ---------------------------------------------------------------------------

AteNormalityReport verify_ate_normality(const AteNormalityConfig& cfg) {
  cfg.dgp.validate();
  if (cfg.reps < 2) throw InvalidArgument("verify_ate_normality: need at least 2 replications");
  AteNormalityReport rep;
  const double N = static_cast<double>(cfg.n);
  rep.k = cfg.k_fixed ? *cfg.k_fixed
                      : static_cast<std::size_t>(std::ceil(std::pow(N, cfg.k_exponent)));
  const std::size_t d = cfg.dgp.dim;
  if (d > 3) {
    rep.skipped = true;
    rep.note = "d=" + std::to_string(d) +
               ": the conditional bias is no longer negligible, normality does not extend";
    return rep;
  }
  if (cfg.k_fixed) {
    rep.skipped = true;
    rep.note = "k is fixed; the efficiency result needs a diverging k";
    return rep;
  }
  const double a = cfg.k_exponent;
  const bool in_regime = a > 0.0 && ((d == 1 && 3.0 * a < 2.0) || (d == 2 && 2.0 * a < 1.0) ||
                                     (d == 3 && 4.0 * a < 1.0));
  if (!in_regime) {
    rep.skipped = true;
    rep.note = "k = N^" + format_double(a) + " is outside the growth regime for d=" + std::to_string(d);
    return rep;
  }

  rep.tau = cfg.dgp.true_tau();
  rep.sigma2 = semiparametric_variance(cfg.dgp.moments(), rep.tau, 400000, derive_seed(cfg.seed, 0xa7e));
  const double half = 1.959963984540054 * std::sqrt(rep.sigma2 / N);

  std::vector<double> err(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    const ATEDraw draw = gen_ate_dgp(cfg.dgp, cfg.n, derive_seed(cfg.seed, r));
    err[r] = estimate_ate(draw.sample, rep.k).ate - rep.tau;
  });
  std::size_t covered = 0;
  for (double e : err)
    if (std::abs(e) <= half) ++covered;
  rep.coverage = static_cast<double>(covered) / static_cast<double>(cfg.reps);
  rep.coverage_ci = binomial_interval(covered, cfg.reps);
  const MeanStd ms = mean_and_std_error(err);
  rep.mean_error = ms.mean;
  rep.sd_scaled = ms.std_error * std::sqrt(static_cast<double>(cfg.reps)) * std::sqrt(N);
  return rep;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

std::vector<double> default_radius_grid(const Domain& domain, std::size_t count) {
  const BoundingBox box = domain.bounding_box();
  double diam2 = 0.0;
  for (std::size_t j = 0; j < box.lo.size(); ++j) diam2 += (box.hi[j] - box.lo[j]) * (box.hi[j] - box.lo[j]);
  const double diam = std::sqrt(diam2);
  std::vector<double> r(count);
  for (std::size_t i = 0; i < count; ++i)
    r[i] = diam * std::pow(1e-3, 1.0 - static_cast<double>(i) / static_cast<double>(count - 1));
  return r;
}

GeometryReport check_geometry(const DomainPtr& domain, const GeometryConfig& cfg) {
  if (!domain) throw InvalidArgument("check_geometry: no domain");
  GeometryReport rep;
  const Sampler q = uniform_sampler(domain);
  rep.condition_a = check_condition_A(*domain, q, cfg.L_grid, cfg.n_mc, derive_seed(cfg.seed, 1));
  rep.tube = tube_mass_ratio(*domain, q, cfg.eps_grid, cfg.n_mc, derive_seed(cfg.seed, 1));
  const auto r_grid = cfg.r_grid.empty() ? default_radius_grid(*domain) : cfg.r_grid;
  rep.x2 = check_condition_X2(*domain, cfg.n_centers, r_grid, cfg.x2_mc, derive_seed(cfg.seed, 2));
  if (!cfg.extra_centers.empty()) {
    const BallRatioReport extra = check_condition_X2(*domain, 0, r_grid, cfg.x2_mc,
                                                     derive_seed(cfg.seed, 3), cfg.extra_centers);
    if (extra.min_ratio < rep.x2.min_ratio) {
      const std::size_t checked = rep.x2.centers_checked + extra.centers_checked;
      rep.x2 = extra;
      rep.x2.centers_checked = checked;
    } else {
      rep.x2.centers_checked += extra.centers_checked;
    }
  }
  rep.consistent = rep.tube.verdict == rep.condition_a.verdict;
  return rep;
}

}  // namespace knnshift
