#include "doctest.h"
#include "run_config.hpp"

using namespace knnshift;
using namespace knnshift::cli;
using nlohmann::json;

TEST_CASE("method specs") {
  const MethodSpec a = parse_method(json("1NN-CSA"), "m");
  CHECK(a.kind == MethodKind::csa);
  CHECK(a.label == "1NN-CSA");
  const MethodSpec b = parse_method(json{{"kind", "poly"}, {"k", {{"power", 0.5}}}, {"permissive", true}}, "m");
  CHECK(b.label == "poly");
  CHECK(b.order == 1);
  CHECK(b.k.resolve(1, 400) == 20);
  CHECK(b.poly.permissive);
  CHECK(parse_method(json{{"kind", "weight"}, {"k", 3}}, "m").k.resolve(2, 100) == 3);
  CHECK(parse_method(json{{"kind", "csa"}, {"csa_mode", "conditional_mean"}}, "m").csa_mode ==
        CsaMode::conditional_mean);
  CHECK_THROWS_AS(parse_method(json{{"kind", "weight"}, {"kk", 3}}, "m"), ConfigError);
  CHECK_THROWS_AS(parse_method(json{{"kind", "weight"}, {"k", 0}}, "m"), ConfigError);
  CHECK_THROWS_AS(parse_method(json{{"kind", "weight"}, {"k", 1.5}}, "m"), ConfigError);
  CHECK_THROWS_AS(parse_method(json{{"kind", "nearest"}}, "m"), ConfigError);
  CHECK_THROWS_AS(parse_method(json{{"kind", "weight"}, {"label", "a,b"}}, "m"), ConfigError);
  CHECK_THROWS_AS(parse_method(json("3NN"), "m"), ConfigError);
}

TEST_CASE("domains") {
  CHECK(parse_domain(json{{"type", "unit_box"}, {"dim", 3}}, "domain")->dim() == 3);
  const auto u = parse_domain(json::parse(R"({"type": "union", "parts": [
      {"type": "ball", "center": [0, 0], "radius": 1},
      {"type": "box", "lo": [2, 2], "hi": [3, 3]}]})"),
                              "domain");
  CHECK(u->contains(Point{2.5, 2.5}));
  CHECK_FALSE(u->contains(Point{1.5, 1.5}));
  try {
    parse_domain(json::parse(R"({"type": "union", "parts": [{"type": "ring_union", "k_max": 5, "gap": 0.1, "x": 1}]})"),
                 "domain");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()) == "domain.parts[0].x: unknown key");
  }
  CHECK_THROWS_AS(parse_domain(json{{"type", "torus"}}, "domain"), ConfigError);
  CHECK_THROWS_AS(parse_domain(json{{"type", "box"}, {"lo", {0, 0}}, {"hi", {1}}}, "domain"), ConfigError);
}

TEST_CASE("command configs and overrides") {
  const json sweep = json::parse(R"({"command": "sweep", "dims": [1, 3], "methods": ["1NN-W"], "reps": 10, "seed": 4})");
  SweepRun s = parse_sweep(sweep, {});
  CHECK(s.config.dims == std::vector<std::size_t>{1, 3});
  CHECK(s.config.reps == 10);
  CHECK(s.config.seed == 4);
  Overrides o;
  o.seed = 99;
  o.reps = 3;
  o.threads = 2;
  s = parse_sweep(sweep, o);
  CHECK(s.config.reps == 3);
  CHECK(s.config.seed == 99);
  CHECK(s.config.threads == 2);
  CHECK_THROWS_AS(parse_sweep(json::parse(R"({"methods": []})"), {}), ConfigError);
  CHECK_THROWS_AS(parse_sweep(json::parse(R"({"methods": ["1NN-W"], "reps": 1})"), {}), ConfigError);
  CHECK_THROWS_AS(parse_estimate(sweep, {}), ConfigError);

  const EstimateRun e = parse_estimate(json::parse(R"({"setup": {"name": "TN0.5-Cubic", "target_point_mass": 1}, "d": 2, "n": 10, "method": "OracleY"})"), {});
  CHECK(e.setup.dim == 2);
  CHECK(e.m == 10);
  CHECK(*e.setup.target.point_mass == 1.0);

  Overrides v;
  v.suite = "bias";
  v.reps = 7;
  const VerifyRun r = parse_verify(json::parse(R"({"suite": "lemmas", "bias": {"n_grid": [100, 200]}})"), v);
  CHECK(r.suite == "bias");
  CHECK(r.bias.config.reps == 7);
  CHECK(r.bias.config.n_grid == std::vector<std::size_t>{100, 200});
  CHECK_THROWS_AS(parse_verify(json::parse(R"({"suite": "everything"})"), {}), ConfigError);
  CHECK_THROWS_AS(parse_verify(json::parse(R"({"negative_correlation": {"p_a": 0.7, "p_b": 0.5}})"), {}), ConfigError);

  const AteRun a = parse_ate(json::parse(R"({"n": 100, "k": 4, "estimator": "local_poly"})"), {});
  CHECK(a.local_poly);
  CHECK(*a.k == 4);
  CHECK_THROWS_AS(parse_ate(json::parse(R"({"k_exponent": 1.5})"), {}), ConfigError);
  CHECK(parse_command("geometry") == Command::geometry);
  CHECK_THROWS_AS(parse_command("plot"), ConfigError);
}
