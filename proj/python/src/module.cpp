#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "knnshift/datagen.hpp"
#include "knnshift/estimators.hpp"
#include "knnshift/geometry.hpp"
#include "knnshift/harness.hpp"
#include "knnshift/knn.hpp"
#include "knnshift/polybasis.hpp"
#include "knnshift/stats.hpp"
#include "run_config.hpp"

namespace py = pybind11;
using namespace knnshift;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

/// (n, d) or (n,) array -> PointSet; a 1-D array is n points in one dimension.
PointSet to_points(const Array& a, const char* name) {
  if (a.ndim() == 1) return PointSet(1, std::vector<double>(a.data(), a.data() + a.shape(0)));
  if (a.ndim() != 2) throw InvalidArgument(std::string(name) + ": expected a 1-D or 2-D array");
  if (a.shape(1) == 0) throw InvalidArgument(std::string(name) + ": zero columns");
  return PointSet(static_cast<std::size_t>(a.shape(1)), std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<double> to_vector(const Array& a, const char* name) {
  if (a.ndim() != 1) throw InvalidArgument(std::string(name) + ": expected a 1-D array");
  return {a.data(), a.data() + a.shape(0)};
}

Point to_point(const Array& a) {
  if (a.ndim() > 1) throw InvalidArgument("x: expected a scalar or 1-D array");
  return {a.data(), a.data() + a.size()};
}

Array from_points(const PointSet& p) {
  Array out({p.size(), p.dim()});
  std::copy(p.flat().begin(), p.flat().end(), out.mutable_data());
  return out;
}

Array from_vector(const std::vector<double>& v) {
  Array out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

LabeledSample to_sample(const Array& x, const Array& y) {
  LabeledSample s{to_points(x, "x_source"), to_vector(y, "y_source")};
  s.validate("source");
  return s;
}

/// h given as a name, a constant, or a Python callable h(x, y).
HFunction to_h(const py::object& h) {
  if (py::isinstance<py::str>(h)) {
    const std::string name = h.cast<std::string>();
    if (name == "y") return HFunction::label();
    if (name == "x1_plus_y_squared") return HFunction::first_coord_plus_label_squared();
    if (name == "x1_plus_y") return HFunction::first_coord_plus_label();
    throw InvalidArgument("h: unknown name '" + name + "' (y, x1_plus_y, x1_plus_y_squared)");
  }
  if (py::isinstance<py::float_>(h) || py::isinstance<py::int_>(h)) return HFunction::constant(h.cast<double>());
  if (!PyCallable_Check(h.ptr())) throw InvalidArgument("h: expected a name, a number or a callable");
  // Copies of the callable share one reference, dropped under the GIL.
  std::shared_ptr<py::object> fn(new py::object(h), [](py::object* o) {
    py::gil_scoped_acquire gil;
    delete o;
  });
  return {[fn](PointView x, double y) {
            py::gil_scoped_acquire gil;
            Array xa(x.size());
            std::copy(x.begin(), x.end(), xa.mutable_data());
            return (*fn)(xa, y).cast<double>();
          },
          "python"};
}

CsaMode to_mode(const std::string& m) {
  if (m == "sampled") return CsaMode::sampled;
  if (m == "conditional_mean") return CsaMode::conditional_mean;
  throw InvalidArgument("mode: expected 'sampled' or 'conditional_mean'");
}

ATESample to_ate(const Array& x, const Array& y, const py::array_t<bool>& w) {
  ATESample s;
  s.covariates = to_points(x, "x");
  s.outcomes = to_vector(y, "y");
  if (w.ndim() != 1) throw InvalidArgument("w: expected a 1-D array");
  auto wr = w.unchecked<1>();
  for (py::ssize_t i = 0; i < wr.shape(0); ++i) s.treated.push_back(wr(i));
  return s;
}

py::dict sweep_result(const SweepResult& r) {
  py::dict d;
  d["results_csv"] = r.results_csv();
  d["aggregates_csv"] = r.aggregates_csv();
  py::list invalid;
  for (const auto& i : r.invalid) invalid.append(py::dict(py::arg("method") = i.method, py::arg("d") = i.d,
                                                         py::arg("n") = i.n, py::arg("reason") = i.reason));
  d["invalid"] = invalid;
  return d;
}

}  // namespace

PYBIND11_MODULE(_knnshift, m) {
  m.doc() = "k-nearest-neighbour matching estimators under covariate shift";

  // Later registrations are tried first, so derived types come last.
  auto& base = py::register_exception<Error>(m, "KnnShiftError", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  auto& numerical = py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<DegenerateFit>(m, "DegenerateFit", numerical.ptr());

  py::class_<NNIndex>(m, "NNIndex", "Exact Euclidean k-NN index; ties go to the smaller index.")
      .def(py::init([](const Array& points) { return NNIndex(to_points(points, "points")); }), py::arg("points"))
      .def_property_readonly("size", &NNIndex::size)
      .def_property_readonly("dim", &NNIndex::dim)
      .def(
          "knn",
          [](const NNIndex& idx, const Array& x, std::size_t k) {
            const auto nb = idx.knn(to_point(x), k);
            py::array_t<std::size_t> ind(nb.size());
            Array dist(nb.size());
            for (std::size_t i = 0; i < nb.size(); ++i) {
              ind.mutable_data()[i] = nb[i].index;
              dist.mutable_data()[i] = std::sqrt(nb[i].squared_distance);
            }
            return py::make_tuple(ind, dist);
          },
          py::arg("x"), py::arg("k"), "(indices, distances) of the k nearest points, closest first")
      .def(
          "knn_radius", [](const NNIndex& idx, const Array& x, std::size_t k) { return idx.knn_radius(to_point(x), k); },
          py::arg("x"), py::arg("k"));

  m.def(
      "estimate_weight",
      [](const Array& xs, const Array& ys, const Array& xt, std::size_t k, const py::object& h) {
        const LabeledSample s = to_sample(xs, ys);
        const PointSet t = to_points(xt, "x_target");
        const HFunction hf = to_h(h);
        py::gil_scoped_release release;
        return estimate_weight(s, t, hf, k);
      },
      py::arg("x_source"), py::arg("y_source"), py::arg("x_target"), py::arg("k") = 1, py::arg("h") = "y",
      "Matching-weight estimator of E[h(X*, Y*)].");
  m.def(
      "estimate_csa",
      [](const Array& xs, const Array& ys, const Array& xt, std::size_t k, std::uint64_t seed, const std::string& mode,
         const py::object& h) {
        const LabeledSample s = to_sample(xs, ys);
        const PointSet t = to_points(xt, "x_target");
        const HFunction hf = to_h(h);
        const CsaMode md = to_mode(mode);
        py::gil_scoped_release release;
        return estimate_csa(s, t, hf, k, seed, md);
      },
      py::arg("x_source"), py::arg("y_source"), py::arg("x_target"), py::arg("k") = 1, py::arg("seed") = 1,
      py::arg("mode") = "sampled", py::arg("h") = "y", "Conditional-sampling estimator of E[h(X*, Y*)].");
  m.def(
      "estimate_local_poly",
      [](const Array& xs, const Array& ys, const Array& xt, std::size_t k, unsigned order, bool permissive,
         bool fallback_to_mean, const py::object& h) {
        const LabeledSample s = to_sample(xs, ys);
        const PointSet t = to_points(xt, "x_target");
        const HFunction hf = to_h(h);
        LocalPolyResult r;
        {
          py::gil_scoped_release release;
          r = estimate_local_poly(s, t, hf, k, order, {permissive, fallback_to_mean});
        }
        return py::make_tuple(r.estimate, r.fallback_count);
      },
      py::arg("x_source"), py::arg("y_source"), py::arg("x_target"), py::arg("k"), py::arg("order") = 1,
      py::arg("permissive") = false, py::arg("fallback_to_mean") = false, py::arg("h") = "y",
      "Local polynomial estimator; returns (estimate, fallback_count).");
  m.def(
      "local_poly_regress",
      [](const Array& xs, const Array& ys, const Array& x, std::size_t k, unsigned order, const py::object& h) {
        const LabeledSample s = to_sample(xs, ys);
        const HFunction hf = to_h(h);
        const Point p = to_point(x);
        py::gil_scoped_release release;
        return local_poly_regress(s, p, k, MultiIndexBasis(s.dim(), order), hf);
      },
      py::arg("x_source"), py::arg("y_source"), py::arg("x"), py::arg("k"), py::arg("order") = 1, py::arg("h") = "y",
      "Intercept of the local polynomial fit at x.");

  m.def(
      "estimate_ate",
      [](const Array& x, const Array& y, const py::array_t<bool>& w, std::size_t k) {
        const AteResult r = estimate_ate(to_ate(x, y, w), k);
        py::dict d;
        d["ate"] = r.ate;
        d["ate_imputation"] = r.ate_imputation;
        d["att"] = r.att;
        d["att_imputation"] = r.att_imputation;
        d["match_counts"] = r.match_counts;
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("w"), py::arg("k") = 1, "Matching ATE and ATT (weighting and imputation forms).");
  m.def(
      "estimate_ate_local_poly",
      [](const Array& x, const Array& y, const py::array_t<bool>& w, std::size_t k, unsigned order, bool permissive,
         bool fallback_to_mean) {
        const LocalPolyResult r = estimate_ate_local_poly(to_ate(x, y, w), k, order, {permissive, fallback_to_mean});
        return py::make_tuple(r.estimate, r.fallback_count);
      },
      py::arg("x"), py::arg("y"), py::arg("w"), py::arg("k"), py::arg("order") = 1, py::arg("permissive") = false,
      py::arg("fallback_to_mean") = false);

  m.def(
      "multi_indices", [](std::size_t d, unsigned order) { return MultiIndexBasis(d, order).indices(); }, py::arg("d"),
      py::arg("order"), "Multi-indices of total degree <= order, graded lexicographic.");
  m.def(
      "min_neighbours", [](std::size_t d, unsigned order) { return min_neighbours(MultiIndexBasis(d, order)); },
      py::arg("d"), py::arg("order"));
  m.def("bias_gamma_factor", &bias_gamma_factor, py::arg("k"), py::arg("d"));
  m.def("unit_ball_volume", &unit_ball_volume, py::arg("d"));

  m.def("setup_names", &setup_names);
  m.def(
      "gen_setup",
      [](const std::string& name, std::size_t d, std::size_t n, std::size_t mt, std::uint64_t seed) {
        const SetupDraw s = gen_setup(make_setup(name, d), n, mt, seed);
        py::dict out;
        out["x_source"] = from_points(s.source.covariates);
        out["y_source"] = from_vector(s.source.labels);
        out["x_target"] = from_points(s.targets);
        out["y_target"] = from_vector(s.target_labels);
        return out;
      },
      py::arg("name"), py::arg("d"), py::arg("n"), py::arg("m"), py::arg("seed") = 1);
  m.def(
      "oracle_expectation", [](const std::string& name, std::size_t d) { return oracle_expectation(make_setup(name, d)).value; },
      py::arg("name"), py::arg("d"), "e(h) for a named setup with h(x, y) = (x_1 + y)^2.");
  m.def(
      "gen_ate",
      [](std::size_t n, std::uint64_t seed, double sigma) {
        const ATEDraw a = gen_ate_dgp(default_ate_dgp(sigma), n, seed);
        py::array_t<bool> w(a.sample.size());
        for (std::size_t i = 0; i < a.sample.size(); ++i) w.mutable_data()[i] = a.sample.treated[i];
        py::dict out;
        out["x"] = from_points(a.sample.covariates);
        out["y"] = from_vector(a.sample.outcomes);
        out["w"] = w;
        out["tau"] = a.tau;
        return out;
      },
      py::arg("n"), py::arg("seed") = 1, py::arg("sigma") = 1.0,
      "Draw from the default design: X ~ U[0, 1], e(x) = 0.25 + 0.5 x, tau = 0.5.");

  m.def(
      "fit_rate",
      [](const std::vector<double>& n, const std::vector<double>& err) {
        const RateFit f = fit_rate(n, err);
        return py::make_tuple(f.slope, f.std_error);
      },
      py::arg("n"), py::arg("errors"), "(slope, std_error) of log(error) on log(n).");

  m.def(
      "run_sweep",
      [](const std::string& config_json) {
        const cli::SweepRun r = cli::parse_sweep(nlohmann::json::parse(config_json), {});
        SweepResult res;
        {
          py::gil_scoped_release release;
          res = run_sweep(r.config);
        }
        return sweep_result(res);
      },
      py::arg("config_json"), "Run a sweep from a JSON config (same schema as the CLI).");
  m.def(
      "check_geometry",
      [](const std::string& config_json) {
        const cli::GeometryRun r = cli::parse_geometry(nlohmann::json::parse(config_json), {});
        GeometryReport g;
        {
          py::gil_scoped_release release;
          g = check_geometry(r.domain, r.config);
        }
        py::dict d;
        d["condition_a"] = to_string(g.condition_a.verdict);
        d["L_grid"] = g.condition_a.L_grid;
        d["I"] = g.condition_a.I_values;
        d["I_std_errors"] = g.condition_a.mc_std_errors;
        d["tube"] = to_string(g.tube.verdict);
        d["tube_ratios"] = g.tube.ratios;
        d["x2_min_ratio"] = g.x2.min_ratio;
        d["consistent"] = g.consistent;
        return d;
      },
      py::arg("config_json"), "Condition (A), tube and ball-ratio checks from a JSON geometry config.");
}
