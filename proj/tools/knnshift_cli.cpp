#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "knnshift/estimators.hpp"
#include "knnshift/format.hpp"
#include "knnshift/stats.hpp"
#include "run_config.hpp"

using namespace knnshift;
using namespace knnshift::cli;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kConfigError = 1, kNumericalError = 2, kVerifierFail = 3;

/// Exit code carried by an error raised mid-run.
struct RunError : std::runtime_error {
  int code;
  std::string kind;
  RunError(int c, std::string k, const std::string& msg) : std::runtime_error(msg), code(c), kind(std::move(k)) {}
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw RunError(kNumericalError, "io_error", "cannot write " + p.string());
}

void write_json(const fs::path& p, const ojson& j) { write_file(p, j.dump(2) + "\n"); }

ojson point_json(PointView x) {
  ojson a = ojson::array();
  for (double v : x) a.push_back(v);
  return a;
}

int run_estimate(const EstimateRun& r, const fs::path& out, std::ostream& log) {
  const std::size_t d = r.setup.dim;
  const std::size_t k = r.method.k.resolve(d, r.n);
  const std::string why = method_precondition(r.method, d, r.n, k);
  if (!why.empty()) throw ConfigError("method: " + why);
  // Same data stream as replication 0 of a sweep cell.
  const std::uint64_t data_seed = derive_seed(r.seed, d, r.n, 0);
  const SetupDraw draw = gen_setup(r.setup, r.n, r.m, data_seed);
  const double oracle = oracle_expectation(r.setup).value;
  const double estimate = run_method(r.method, draw, r.setup.h(), k, data_seed);

  SweepResult s;
  SweepRow row;
  row.method = r.method.label;
  row.d = d;
  row.n = r.n;
  row.k = k;
  row.L = r.method.kind == MethodKind::poly ? r.method.order : 0;
  row.estimate = estimate;
  row.oracle = oracle;
  row.error = estimate - oracle;
  s.rows.push_back(row);
  write_file(out / "results.csv", s.results_csv());

  ojson v;
  v["command"] = "estimate";
  v["method"] = row.method;
  v["d"] = d;
  v["n"] = r.n;
  v["m"] = r.m;
  v["k"] = k;
  v["estimate"] = estimate;
  v["oracle"] = oracle;
  v["error"] = row.error;
  write_json(out / "verdicts.json", v);
  log << v.dump() << "\n";
  return kOk;
}

int run_sweep_cmd(const SweepRun& r, const fs::path& out, std::ostream& log) {
  const SweepResult s = run_sweep(r.config);
  write_file(out / "results.csv", s.results_csv());
  write_file(out / "aggregates.csv", s.aggregates_csv());

  ojson v;
  v["command"] = "sweep";
  v["rates"] = ojson::array();
  const auto& c = r.config;
  for (const auto& m : c.methods)
    for (auto d : c.dims) {
      std::vector<double> ns, errs;
      for (auto n : c.n_grid) {
        const SweepAggregate* a = s.find(m.label, d, n);
        if (a && a->valid_reps > 0 && std::isfinite(a->rmse) && a->rmse > 0.0) {
          ns.push_back(static_cast<double>(n));
          errs.push_back(a->rmse);
        }
      }
      ojson rate;
      rate["method"] = m.label;
      rate["d"] = d;
      rate["points"] = ns.size();
      if (ns.size() >= 3) {
        const RateFit f = fit_rate(ns, errs);
        rate["slope"] = f.slope;
        rate["std_error"] = f.std_error;
      } else {
        rate["slope"] = nullptr;
        rate["std_error"] = nullptr;
      }
      v["rates"].push_back(rate);
    }
  v["invalid"] = ojson::array();
  bool degenerate = false;
  for (const auto& i : s.invalid) {
    v["invalid"].push_back({{"method", i.method}, {"d", i.d}, {"n", i.n}, {"reason", i.reason}});
    degenerate = degenerate || i.reason.rfind("degenerate", 0) == 0;
  }
  write_json(out / "verdicts.json", v);
  log << ojson{{"command", "sweep"}, {"rows", s.rows.size()}, {"invalid", s.invalid.size()}}.dump() << "\n";
  if (degenerate) throw RunError(kNumericalError, "degenerate_fit", "degenerate local fits in abort mode; see verdicts.json");
  return kOk;
}

int run_geometry(const GeometryRun& r, const fs::path& out, std::ostream& log) {
  const GeometryReport g = check_geometry(r.domain, r.config);
  write_file(out / "condition_a.csv", g.condition_a.to_csv());
  write_file(out / "tube.csv", g.tube.to_csv());

  ojson v;
  v["command"] = "geometry";
  v["domain"] = r.domain->kind();
  v["condition_a"] = to_string(g.condition_a.verdict);
  v["tube"] = to_string(g.tube.verdict);
  v["consistent"] = g.consistent;
  v["x2"] = {{"min_ratio", g.x2.min_ratio},
             {"std_error", g.x2.std_error},
             {"center", point_json(g.x2.argmin_center)},
             {"radius", g.x2.argmin_radius},
             {"centers_checked", g.x2.centers_checked}};
  ojson checks = ojson::array();
  bool pass = true;
  auto add = [&](const std::string& name, bool ok) {
    checks.push_back({{"name", name}, {"pass", ok}});
    pass = pass && ok;
  };
  const auto& e = r.expect;
  if (e.condition_a) add("condition_a == " + to_string(*e.condition_a), g.condition_a.verdict == *e.condition_a);
  if (e.tube) add("tube == " + to_string(*e.tube), g.tube.verdict == *e.tube);
  if (e.x2_at_least) add("x2 min ratio >= " + format_double(*e.x2_at_least), g.x2.min_ratio >= *e.x2_at_least);
  if (e.x2_below) add("x2 min ratio < " + format_double(*e.x2_below), g.x2.min_ratio < *e.x2_below);
  v["expectations"] = checks;
  v["pass"] = pass;
  write_json(out / "verdicts.json", v);
  log << ojson{{"command", "geometry"},
               {"condition_a", v["condition_a"]},
               {"tube", v["tube"]},
               {"x2_min_ratio", g.x2.min_ratio},
               {"pass", pass}}
             .dump()
      << "\n";
  return pass ? kOk : kVerifierFail;
}

struct Check {
  std::string name, quantity;
  double value = 0.0, reference = 0.0;
  bool pass = false;
  std::string detail;
};

void lemma_checks(const VerifyRun& r, std::vector<Check>& out) {
  const TauLawReport b = verify_tau_laws(r.beta);
  out.push_back({"beta_law", "ks_p_value", b.ks.p_value, 0.01, b.ks.p_value > 0.01,
                 "F_x(tau_k) against Beta(k, n-k+1), n=" + std::to_string(r.beta.n) + " k=" +
                     std::to_string(r.beta.k)});

  const TauLawReport m = verify_tau_laws(r.moments);
  const double z = std::abs(m.mean_tau - m.exact_mean) / m.mean_std_error;
  out.push_back({"tau_moments", "mean_z", z, 3.0, z <= 3.0 && m.mean_tau <= m.moment_bound,
                 "mean " + format_double(m.mean_tau) + " vs exact " + format_double(m.exact_mean) +
                     ", moment bound " + format_double(m.moment_bound)});
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& t : m.tail) worst = std::max(worst, t.empirical - t.bound);
  out.push_back({"tau_tails", "max_excess", worst, 0.0, m.tail_ok,
                 std::to_string(m.tail.size()) + " tail points against the exponential bound"});

  const auto& nc = r.negative_correlation;
  const NegativeCorrelationReport n = verify_negative_correlation(nc.p_a, nc.p_b, nc.n);
  out.push_back({"negative_correlation", "violations", static_cast<double>(n.violations), 0.0, n.violations == 0,
                 std::to_string(n.cells_checked) + " cells, max LHS-RHS " + format_double(n.max_excess)});
}

void catchment_checks(const VerifyRun& r, std::vector<Check>& out) {
  const CatchmentTailReport c = verify_catchment_tail(r.catchment);
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& t : c.tail) worst = std::max(worst, t.empirical - t.bound);
  out.push_back({"catchment_tail", "max_excess", worst, 0.0, c.bound_ok, "survival of n Q(A_k)/k vs bound"});
  out.push_back({"catchment_mean", "mean_normalized", c.mean_normalized, 1.0,
                 c.mean_normalized >= 0.9 && c.mean_normalized <= 1.1,
                 "need [0.9, 1.1], std error " + format_double(c.mean_std_error)});
}

void bias_checks(const VerifyRun& r, std::vector<Check>& out) {
  const BiasExpansionReport b = verify_bias_expansion(r.bias.config);
  const BiasExpansionRow& last = b.rows.back();
  const double rel = std::abs(last.ratio - 1.0);
  out.push_back({"bias_expansion", "relative_deviation", rel, r.bias.tolerance, rel <= r.bias.tolerance,
                 "n=" + std::to_string(last.n) + ": n^2 mean bias " + format_double(last.scaled) + " vs C " +
                     format_double(b.theoretical.value)});
}

void ate_checks(const VerifyRun& r, std::vector<Check>& out) {
  const AteNormalityReport a = verify_ate_normality(r.ate);
  if (a.skipped) {
    out.push_back({"ate_coverage", "coverage", 0.0, 0.95, false, "skipped: " + a.note});
    return;
  }
  out.push_back({"ate_coverage", "coverage", a.coverage, 0.95, a.coverage >= 0.90 && a.coverage <= 0.98,
                 "k=" + std::to_string(a.k) + ", need [0.90, 0.98], CI [" + format_double(a.coverage_ci.lo) + ", " +
                     format_double(a.coverage_ci.hi) + "]"});
}

int run_verify(const VerifyRun& r, const fs::path& out, std::ostream& log) {
  std::vector<Check> checks;
  const bool all = r.suite == "all";
  if (all || r.suite == "lemmas") lemma_checks(r, checks);
  if (all || r.suite == "catchment") catchment_checks(r, checks);
  if (all || r.suite == "bias") bias_checks(r, checks);
  if (all || r.suite == "ate") ate_checks(r, checks);

  std::ostringstream csv;
  csv << "check,quantity,value,reference,pass\n";
  ojson v;
  v["command"] = "verify";
  v["suite"] = r.suite;
  v["checks"] = ojson::array();
  bool pass = true;
  for (const auto& c : checks) {
    csv << c.name << ',' << c.quantity << ',' << format_double(c.value) << ',' << format_double(c.reference) << ','
        << (c.pass ? "PASS" : "FAIL") << '\n';
    v["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {c.quantity, c.value}, {"detail", c.detail}});
    pass = pass && c.pass;
  }
  v["pass"] = pass;
  write_file(out / "results.csv", csv.str());
  write_json(out / "verdicts.json", v);
  log << v.dump() << "\n";
  return pass ? kOk : kVerifierFail;
}

int run_ate(const AteRun& r, const fs::path& out, std::ostream& log) {
  const ATEDGPSpec dgp = default_ate_dgp(r.sigma);
  const std::size_t k =
      r.k ? *r.k : static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(r.n), r.k_exponent)));
  std::vector<double> est(r.reps), att(r.reps), taus(r.reps);
  std::vector<std::size_t> fallbacks(r.reps);
  parallel_for(r.reps, r.threads, [&](std::size_t rep) {
    const ATEDraw d = gen_ate_dgp(dgp, r.n, derive_seed(r.seed, rep));
    taus[rep] = d.tau;
    if (r.local_poly) {
      LocalPolyOptions opt;
      opt.permissive = true;
      const LocalPolyResult lp = estimate_ate_local_poly(d.sample, k, r.order, opt);
      est[rep] = lp.estimate;
      att[rep] = std::nan("");
      fallbacks[rep] = lp.fallback_count;
    } else {
      const AteResult a = estimate_ate(d.sample, k);
      est[rep] = a.ate;
      att[rep] = a.att;
    }
  });
  std::ostringstream csv;
  csv << "replication,k,estimate,att,tau,error\n";
  std::vector<double> errs(r.reps);
  for (std::size_t i = 0; i < r.reps; ++i) {
    errs[i] = est[i] - taus[i];
    csv << i << ',' << k << ',' << format_double(est[i]) << ',' << format_double(att[i]) << ','
        << format_double(taus[i]) << ',' << format_double(errs[i]) << '\n';
  }
  write_file(out / "results.csv", csv.str());
  const SweepAggregate a = aggregate_errors(errs);
  const std::string label = r.local_poly ? "local_poly" : "matching";
  std::ostringstream agg;
  agg << "estimator,n,k,bias,variance,rmse,stderr\n"
      << label << ',' << r.n << ',' << k << ',' << format_double(a.bias) << ',' << format_double(a.variance) << ','
      << format_double(a.rmse) << ',' << format_double(a.std_error) << '\n';
  write_file(out / "aggregates.csv", agg.str());
  ojson v;
  v["command"] = "ate";
  v["estimator"] = label;
  v["n"] = r.n;
  v["k"] = k;
  v["reps"] = r.reps;
  v["tau"] = taus.front();
  v["mean_estimate"] = a.bias + taus.front();
  v["rmse"] = a.rmse;
  write_json(out / "verdicts.json", v);
  log << v.dump() << "\n";
  return kOk;
}

void print_error(const std::string& kind, const std::string& message, const std::string& context) {
  std::cerr << ojson{{"code", kind}, {"message", message}, {"context", context}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"k-nearest-neighbour matching estimators and Monte Carlo checks"};
  app.require_subcommand(1);
  app.footer(schema_help());

  std::string config_path, out_dir = "knnshift-out", suite;
  std::uint64_t seed = 0;
  std::size_t reps = 0;
  unsigned threads = 0;
  struct Sub {
    Command command;
    CLI::App* app;
  };
  std::vector<Sub> subs;
  const std::pair<Command, const char*> commands[] = {
      {Command::estimate, "one estimate on a generated covariate-shift sample"},
      {Command::sweep, "rate sweep over methods, dimensions and sample sizes"},
      {Command::geometry, "condition (A), tube-volume and ball-ratio checks on a domain"},
      {Command::verify, "Monte Carlo verifier suites with pass/fail verdicts"},
      {Command::ate, "matching estimates of the average treatment effect"},
  };
  for (const auto& [cmd, text] : commands) {
    CLI::App* s = app.add_subcommand(to_string(cmd), text);
    s->add_option("--config", config_path, "JSON run config")->required();
    s->add_option("--seed", seed, "override the config seed");
    s->add_option("--out", out_dir, "output directory")->capture_default_str();
    s->add_option("--reps", reps, "override replication counts")->check(CLI::PositiveNumber);
    s->add_option("--threads", threads, "worker threads (0: all cores)");
    if (cmd == Command::verify) s->add_option("--suite", suite, "lemmas | catchment | bias | ate | all");
    subs.push_back({cmd, s});
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage_error", e.what(), "argv");
    return kConfigError;
  }

  Command command = Command::estimate;
  Overrides o;
  for (const auto& s : subs)
    if (s.app->parsed()) {
      command = s.command;
      if (s.app->count("--seed")) o.seed = seed;
      if (s.app->count("--reps")) o.reps = reps;
      if (s.app->count("--threads")) o.threads = threads;
      if (s.command == Command::verify && s.app->count("--suite")) o.suite = suite;
    }
  const std::string context = to_string(command) + " " + config_path;

  try {
    std::ifstream f(config_path);
    if (!f) throw ConfigError("cannot read config file " + config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("malformed JSON: ") + e.what());
    }

    // Validate fully before touching the output directory.
    std::function<int(const fs::path&)> run;
    switch (command) {
      case Command::estimate: {
        auto r = parse_estimate(j, o);
        run = [r](const fs::path& p) { return run_estimate(r, p, std::cout); };
        break;
      }
      case Command::sweep: {
        auto r = parse_sweep(j, o);
        run = [r](const fs::path& p) { return run_sweep_cmd(r, p, std::cout); };
        break;
      }
      case Command::geometry: {
        auto r = parse_geometry(j, o);
        run = [r](const fs::path& p) { return run_geometry(r, p, std::cout); };
        break;
      }
      case Command::verify: {
        auto r = parse_verify(j, o);
        run = [r](const fs::path& p) { return run_verify(r, p, std::cout); };
        break;
      }
      case Command::ate: {
        auto r = parse_ate(j, o);
        run = [r](const fs::path& p) { return run_ate(r, p, std::cout); };
        break;
      }
    }
    if (o.threads) set_default_threads(*o.threads);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw RunError(kConfigError, "config_error", "cannot create output directory " + out_dir);
    return run(out_dir);
  } catch (const RunError& e) {
    print_error(e.kind, e.what(), context);
    return e.code;
  } catch (const InvalidArgument& e) {
    print_error("config_error", e.what(), context);
    return kConfigError;
  } catch (const DegenerateFit& e) {
    print_error("degenerate_fit", e.what(), context);
    return kNumericalError;
  } catch (const std::exception& e) {
    print_error("numerical_error", e.what(), context);
    return kNumericalError;
  }
}
