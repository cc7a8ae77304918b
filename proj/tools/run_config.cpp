#include "run_config.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

namespace knnshift::cli {

using nlohmann::json;

namespace {

std::string at(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; }))
      throw ConfigError(at(path, it.key()) + ": unknown key");
}

const json& require(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(at(path, key) + ": required key missing");
  return j.at(key);
}

double as_double(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(where + ": expected a finite number");
  return x;
}

std::uint64_t as_u64(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(where + ": expected a non-negative integer");
}

std::size_t as_positive(const json& v, const std::string& where) {
  const auto x = as_u64(v, where);
  if (x == 0) throw ConfigError(where + ": expected a positive integer");
  return static_cast<std::size_t>(x);
}

double get_double(const json& j, const std::string& path, const char* key, double def) {
  return j.contains(key) ? as_double(j.at(key), at(path, key)) : def;
}

std::size_t get_positive(const json& j, const std::string& path, const char* key, std::size_t def) {
  return j.contains(key) ? as_positive(j.at(key), at(path, key)) : def;
}

std::uint64_t get_u64(const json& j, const std::string& path, const char* key, std::uint64_t def) {
  return j.contains(key) ? as_u64(j.at(key), at(path, key)) : def;
}

bool get_bool(const json& j, const std::string& path, const char* key, bool def) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_boolean()) throw ConfigError(at(path, key) + ": expected true or false");
  return j.at(key).get<bool>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

std::string get_string(const json& j, const std::string& path, const char* key, const std::string& def) {
  return j.contains(key) ? as_string(j.at(key), at(path, key)) : def;
}

std::vector<double> as_doubles(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_double(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::size_t> as_counts(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of positive integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_positive(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<Point> as_points(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of points");
  std::vector<Point> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_doubles(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

unsigned get_threads(const json& j, const Overrides& o) {
  if (o.threads) return *o.threads;
  return static_cast<unsigned>(get_u64(j, "", "threads", 0));
}

std::uint64_t get_seed(const json& j, const Overrides& o, std::uint64_t def = 1) {
  return o.seed ? *o.seed : get_u64(j, "", "seed", def);
}

void check_command(const json& j, Command c) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  if (j.contains("command") && as_string(j.at("command"), "command") != to_string(c))
    throw ConfigError("command: config is for \"" + j.at("command").get<std::string>() + "\", not \"" +
                      to_string(c) + "\"");
}

// Library constructors report bad values as InvalidArgument; tag them with the key path.
template <class F>
auto wrap(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

SetupSpec parse_setup(const json& v, const std::string& where, std::size_t dim) {
  if (v.is_string()) return wrap(where, [&] { return make_setup(v.get<std::string>(), dim); });
  check_keys(v, where, {"name", "noise_sd", "target_point_mass"});
  SetupSpec s = wrap(where, [&] { return make_setup(as_string(require(v, where, "name"), at(where, "name")), dim); });
  s.noise_sd = get_double(v, where, "noise_sd", s.noise_sd);
  if (s.noise_sd < 0.0) throw ConfigError(at(where, "noise_sd") + ": must be non-negative");
  if (v.contains("target_point_mass")) s.target.point_mass = as_double(v.at("target_point_mass"), at(where, "target_point_mass"));
  return s;
}

KPolicy parse_k(const json& v, const std::string& where) {
  if (v.is_number()) {
    KPolicy p;
    p.value = as_positive(v, where);
    return p;
  }
  if (v.is_string()) return wrap(where, [&] { return KPolicy::parse(v.get<std::string>()); });
  check_keys(v, where, {"power"});
  KPolicy p = KPolicy::parse("power");
  p.alpha = as_double(require(v, where, "power"), at(where, "power"));
  if (!(p.alpha > 0.0 && p.alpha < 1.0)) throw ConfigError(at(where, "power") + ": must lie in (0, 1)");
  return p;
}

Verdict parse_verdict(const json& v, const std::string& where) {
  const std::string s = as_string(v, where);
  for (Verdict x : {Verdict::bounded, Verdict::diverging, Verdict::inconclusive})
    if (s == to_string(x)) return x;
  throw ConfigError(where + ": expected bounded, diverging or inconclusive");
}

void parse_tau(const json& v, const std::string& where, TauLawConfig& c) {
  check_keys(v, where, {"n", "k", "x", "reps"});
  c.n = get_positive(v, where, "n", c.n);
  c.k = get_positive(v, where, "k", c.k);
  c.x = get_double(v, where, "x", c.x);
  c.reps = get_positive(v, where, "reps", c.reps);
  if (c.k > c.n) throw ConfigError(at(where, "k") + ": exceeds n");
  if (!(c.x >= 0.0 && c.x <= 1.0)) throw ConfigError(at(where, "x") + ": must lie in [0, 1]");
}

}  // namespace

Command parse_command(const std::string& name) {
  for (Command c : {Command::estimate, Command::sweep, Command::geometry, Command::verify, Command::ate})
    if (name == to_string(c)) return c;
  throw ConfigError("command: unknown command \"" + name + "\"");
}

std::string to_string(Command c) {
  switch (c) {
    case Command::estimate: return "estimate";
    case Command::sweep: return "sweep";
    case Command::geometry: return "geometry";
    case Command::verify: return "verify";
    case Command::ate: return "ate";
  }
  return "?";
}

MethodSpec parse_method(const json& j, const std::string& path) {
  if (j.is_string()) return wrap(path, [&] { return roster_method(j.get<std::string>()); });
  check_keys(j, path, {"label", "kind", "k", "order", "csa_mode", "permissive", "fallback_to_mean"});
  MethodSpec m;
  const std::string kind = as_string(require(j, path, "kind"), at(path, "kind"));
  m.kind = wrap(at(path, "kind"), [&] { return parse_method_kind(kind); });
  m.label = get_string(j, path, "label", kind);
  if (m.label.empty() || m.label.find_first_of(",\n\"") != std::string::npos)
    throw ConfigError(at(path, "label") + ": must be non-empty without commas, quotes or newlines");
  if (j.contains("k")) m.k = parse_k(j.at("k"), at(path, "k"));
  m.order = static_cast<unsigned>(get_u64(j, path, "order", m.kind == MethodKind::poly ? 1 : 0));
  const std::string mode = get_string(j, path, "csa_mode", "sampled");
  if (mode == "sampled")
    m.csa_mode = CsaMode::sampled;
  else if (mode == "conditional_mean")
    m.csa_mode = CsaMode::conditional_mean;
  else
    throw ConfigError(at(path, "csa_mode") + ": expected sampled or conditional_mean");
  m.poly.permissive = get_bool(j, path, "permissive", false);
  m.poly.fallback_to_mean = get_bool(j, path, "fallback_to_mean", false);
  return m;
}

DomainPtr parse_domain(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  const std::string type = as_string(require(j, path, "type"), at(path, "type"));
  return wrap(path, [&]() -> DomainPtr {
    if (type == "box") {
      check_keys(j, path, {"type", "lo", "hi"});
      return make_box(as_doubles(require(j, path, "lo"), at(path, "lo")),
                      as_doubles(require(j, path, "hi"), at(path, "hi")));
    }
    if (type == "unit_box") {
      check_keys(j, path, {"type", "dim"});
      return make_unit_box(as_positive(require(j, path, "dim"), at(path, "dim")));
    }
    if (type == "ball") {
      check_keys(j, path, {"type", "center", "radius"});
      return make_ball(as_doubles(require(j, path, "center"), at(path, "center")),
                       as_double(require(j, path, "radius"), at(path, "radius")));
    }
    if (type == "polytope") {
      check_keys(j, path, {"type", "normals", "offsets", "lo", "hi"});
      return make_polytope(as_points(require(j, path, "normals"), at(path, "normals")),
                           as_doubles(require(j, path, "offsets"), at(path, "offsets")),
                           BoundingBox{as_doubles(require(j, path, "lo"), at(path, "lo")),
                                       as_doubles(require(j, path, "hi"), at(path, "hi"))});
    }
    if (type == "parabola_subgraph") {
      check_keys(j, path, {"type"});
      return make_parabola_subgraph();
    }
    if (type == "ring_union") {
      check_keys(j, path, {"type", "k_max", "gap"});
      return make_ring_union(as_positive(require(j, path, "k_max"), at(path, "k_max")),
                             as_double(require(j, path, "gap"), at(path, "gap")));
    }
    if (type == "union") {
      check_keys(j, path, {"type", "parts"});
      const json& parts = require(j, path, "parts");
      if (!parts.is_array() || parts.empty()) throw ConfigError(at(path, "parts") + ": expected a non-empty array");
      std::vector<DomainPtr> ds;
      for (std::size_t i = 0; i < parts.size(); ++i)
        ds.push_back(parse_domain(parts[i], at(path, "parts") + "[" + std::to_string(i) + "]"));
      return make_union(std::move(ds));
    }
    throw ConfigError(at(path, "type") + ": unknown domain type \"" + type + "\"");
  });
}

EstimateRun parse_estimate(const json& j, const Overrides& o) {
  check_command(j, Command::estimate);
  check_keys(j, "", {"command", "setup", "d", "n", "m", "method", "seed", "threads"});
  EstimateRun r;
  const std::size_t d = get_positive(j, "", "d", 1);
  r.setup = parse_setup(j.contains("setup") ? j.at("setup") : json("TN0.5-Cubic"), "setup", d);
  r.n = get_positive(j, "", "n", r.n);
  r.m = get_positive(j, "", "m", r.n);
  r.method = parse_method(require(j, "", "method"), "method");
  r.seed = get_seed(j, o);
  r.threads = get_threads(j, o);
  return r;
}

SweepRun parse_sweep(const json& j, const Overrides& o) {
  check_command(j, Command::sweep);
  check_keys(j, "", {"command", "setup", "dims", "n_grid", "m_ratio", "methods", "reps", "seed", "threads"});
  SweepRun r;
  SweepConfig& c = r.config;
  c.setup = parse_setup(j.contains("setup") ? j.at("setup") : json("TN0.5-Cubic"), "setup", 1);
  if (j.contains("dims")) c.dims = as_counts(j.at("dims"), "dims");
  if (j.contains("n_grid")) c.n_grid = as_counts(j.at("n_grid"), "n_grid");
  c.m_ratio = get_double(j, "", "m_ratio", c.m_ratio);
  const json& methods = require(j, "", "methods");
  if (!methods.is_array() || methods.empty()) throw ConfigError("methods: expected a non-empty array");
  for (std::size_t i = 0; i < methods.size(); ++i)
    c.methods.push_back(parse_method(methods[i], "methods[" + std::to_string(i) + "]"));
  c.reps = o.reps ? *o.reps : get_positive(j, "", "reps", c.reps);
  c.seed = get_seed(j, o);
  c.threads = get_threads(j, o);
  wrap("config", [&] {
    c.validate();
    return 0;
  });
  return r;
}

GeometryRun parse_geometry(const json& j, const Overrides& o) {
  check_command(j, Command::geometry);
  check_keys(j, "", {"command", "domain", "L_grid", "eps_grid", "r_grid", "n_mc", "n_centers", "x2_mc",
                     "centers", "expect", "seed", "threads"});
  GeometryRun r;
  r.domain = parse_domain(require(j, "", "domain"), "domain");
  GeometryConfig& c = r.config;
  if (j.contains("L_grid")) c.L_grid = as_doubles(j.at("L_grid"), "L_grid");
  if (j.contains("eps_grid")) c.eps_grid = as_doubles(j.at("eps_grid"), "eps_grid");
  if (j.contains("r_grid")) c.r_grid = as_doubles(j.at("r_grid"), "r_grid");
  c.n_mc = get_positive(j, "", "n_mc", c.n_mc);
  c.n_centers = get_positive(j, "", "n_centers", c.n_centers);
  c.x2_mc = get_positive(j, "", "x2_mc", c.x2_mc);
  if (j.contains("centers")) c.extra_centers = as_points(j.at("centers"), "centers");
  for (std::size_t i = 0; i < c.extra_centers.size(); ++i)
    if (c.extra_centers[i].size() != r.domain->dim())
      throw ConfigError("centers[" + std::to_string(i) + "]: dimension differs from the domain");
  c.seed = get_seed(j, o);
  r.threads = get_threads(j, o);
  if (j.contains("expect")) {
    const json& e = j.at("expect");
    check_keys(e, "expect", {"condition_a", "tube", "x2_at_least", "x2_below"});
    if (e.contains("condition_a")) r.expect.condition_a = parse_verdict(e.at("condition_a"), "expect.condition_a");
    if (e.contains("tube")) r.expect.tube = parse_verdict(e.at("tube"), "expect.tube");
    if (e.contains("x2_at_least")) r.expect.x2_at_least = as_double(e.at("x2_at_least"), "expect.x2_at_least");
    if (e.contains("x2_below")) r.expect.x2_below = as_double(e.at("x2_below"), "expect.x2_below");
  }
  return r;
}

VerifyRun parse_verify(const json& j, const Overrides& o) {
  check_command(j, Command::verify);
  check_keys(j, "", {"command", "suite", "beta_law", "tau_moments", "negative_correlation", "catchment", "bias",
                     "ate", "seed", "threads"});
  VerifyRun r;
  r.suite = o.suite ? *o.suite : get_string(j, "", "suite", r.suite);
  if (r.suite != "lemmas" && r.suite != "catchment" && r.suite != "bias" && r.suite != "ate" && r.suite != "all")
    throw ConfigError("suite: expected lemmas, catchment, bias, ate or all");
  r.seed = get_seed(j, o);
  r.threads = get_threads(j, o);

  r.beta.n = 50;
  r.beta.k = 5;
  r.beta.x = 0.3;
  r.beta.reps = 5000;
  if (j.contains("beta_law")) parse_tau(j.at("beta_law"), "beta_law", r.beta);
  r.moments.n = 50;
  r.moments.k = 1;
  r.moments.x = 0.5;
  r.moments.reps = 20000;
  if (j.contains("tau_moments")) parse_tau(j.at("tau_moments"), "tau_moments", r.moments);

  if (j.contains("negative_correlation")) {
    const json& v = j.at("negative_correlation");
    check_keys(v, "negative_correlation", {"p_a", "p_b", "n"});
    auto& c = r.negative_correlation;
    c.p_a = get_double(v, "negative_correlation", "p_a", c.p_a);
    c.p_b = get_double(v, "negative_correlation", "p_b", c.p_b);
    c.n = get_positive(v, "negative_correlation", "n", c.n);
    if (!(c.p_a >= 0.0 && c.p_b >= 0.0 && c.p_a + c.p_b <= 1.0))
      throw ConfigError("negative_correlation: need p_a, p_b >= 0 and p_a + p_b <= 1");
  }
  if (j.contains("catchment")) {
    const json& v = j.at("catchment");
    check_keys(v, "catchment", {"n", "k", "reps", "inner_mc", "t_grid"});
    auto& c = r.catchment;
    c.n = get_positive(v, "catchment", "n", c.n);
    c.k = get_positive(v, "catchment", "k", c.k);
    c.reps = get_positive(v, "catchment", "reps", c.reps);
    c.inner_mc = get_positive(v, "catchment", "inner_mc", c.inner_mc);
    if (v.contains("t_grid")) c.t_grid = as_doubles(v.at("t_grid"), "catchment.t_grid");
  }
  if (j.contains("bias")) {
    const json& v = j.at("bias");
    check_keys(v, "bias", {"k", "n_grid", "reps", "tolerance"});
    auto& c = r.bias;
    c.config.k = get_positive(v, "bias", "k", c.config.k);
    if (v.contains("n_grid")) c.config.n_grid = as_counts(v.at("n_grid"), "bias.n_grid");
    c.config.reps = get_positive(v, "bias", "reps", c.config.reps);
    c.tolerance = get_double(v, "bias", "tolerance", c.tolerance);
  }
  if (j.contains("ate")) {
    const json& v = j.at("ate");
    check_keys(v, "ate", {"n", "k_exponent", "reps", "sigma"});
    auto& c = r.ate;
    c.n = get_positive(v, "ate", "n", c.n);
    c.k_exponent = get_double(v, "ate", "k_exponent", c.k_exponent);
    c.reps = get_positive(v, "ate", "reps", c.reps);
    c.dgp = default_ate_dgp(get_double(v, "ate", "sigma", 1.0));
  }
  if (o.reps) {
    r.beta.reps = r.moments.reps = r.catchment.reps = r.bias.config.reps = r.ate.reps = *o.reps;
  }
  r.beta.seed = derive_seed(r.seed, 5);
  r.moments.seed = derive_seed(r.seed, 6);
  r.catchment.seed = derive_seed(r.seed, 8);
  r.bias.config.seed = derive_seed(r.seed, 9);
  r.ate.seed = derive_seed(r.seed, 12);
  r.beta.threads = r.moments.threads = r.catchment.threads = r.bias.config.threads = r.ate.threads = r.threads;
  return r;
}

AteRun parse_ate(const json& j, const Overrides& o) {
  check_command(j, Command::ate);
  check_keys(j, "", {"command", "n", "sigma", "k", "k_exponent", "estimator", "order", "reps", "seed", "threads"});
  AteRun r;
  r.n = get_positive(j, "", "n", r.n);
  r.sigma = get_double(j, "", "sigma", r.sigma);
  if (r.sigma < 0.0) throw ConfigError("sigma: must be non-negative");
  if (j.contains("k")) r.k = as_positive(j.at("k"), "k");
  r.k_exponent = get_double(j, "", "k_exponent", r.k_exponent);
  if (!(r.k_exponent >= 0.0 && r.k_exponent < 1.0)) throw ConfigError("k_exponent: must lie in [0, 1)");
  const std::string est = get_string(j, "", "estimator", "matching");
  if (est != "matching" && est != "local_poly") throw ConfigError("estimator: expected matching or local_poly");
  r.local_poly = est == "local_poly";
  r.order = static_cast<unsigned>(get_u64(j, "", "order", 1));
  r.reps = o.reps ? *o.reps : get_positive(j, "", "reps", r.reps);
  r.seed = get_seed(j, o);
  r.threads = get_threads(j, o);
  return r;
}

std::string schema_help() {
  return R"(Config schemas (JSON object per run; unknown keys are rejected; "command" is optional and must match):

estimate  setup: name | {name, noise_sd, target_point_mass}   (default "TN0.5-Cubic")
          d: int (1), n: int (4000), m: int (n), seed, threads
          method: roster name | {kind, label, k, order, csa_mode, permissive, fallback_to_mean}
            kind: csa | weight | poly | no_correction | oracle_y
            k: int | "d+5" | "2d^2+3d+3" | {"power": alpha}
            csa_mode: sampled | conditional_mean
sweep     setup, dims: [int] ([1]), n_grid: [int] ([500..16000]), m_ratio (1),
          methods: [method] (required), reps (200), seed, threads
geometry  domain: {type: box, lo, hi} | {type: unit_box, dim} | {type: ball, center, radius}
                | {type: polytope, normals, offsets, lo, hi} | {type: parabola_subgraph}
                | {type: ring_union, k_max, gap} | {type: union, parts: [domain]}
          L_grid, eps_grid, r_grid, n_mc (1e6), n_centers (200), x2_mc (4000),
          centers: [[x...]], expect: {condition_a, tube, x2_at_least, x2_below}, seed, threads
verify    suite: lemmas | catchment | bias | ate | all   (default lemmas)
          beta_law: {n, k, x, reps}, tau_moments: {n, k, x, reps},
          negative_correlation: {p_a, p_b, n}, catchment: {n, k, reps, inner_mc, t_grid},
          bias: {k, n_grid, reps, tolerance}, ate: {n, k_exponent, reps, sigma}, seed, threads
ate       n (5000), sigma (1), k | k_exponent (0.3), estimator: matching | local_poly,
          order (1), reps (1), seed, threads

Roster methods: 1NN-CSA, 1NN-W, kNN-Poly-LB, kNN-Poly-d+5, NoCorrection, OracleY
Outputs in --out: results.csv, aggregates.csv, verdicts.json (per command)
Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 verifier FAIL
)";
}

}  // namespace knnshift::cli
