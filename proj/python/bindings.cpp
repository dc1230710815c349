#include "mesorm/cli.hpp"
#include "mesorm/config.hpp"
#include "mesorm/errors.hpp"
#include "mesorm/harness.hpp"

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace mesorm;

namespace {

AtomicMeasure measure(const std::vector<std::pair<double, double>>& atoms) {
  return build_atomic_measure(atoms);
}

FreeConvolutionModel model_for(const std::string& kind,
                               const std::vector<std::pair<double, double>>& atoms, double gamma) {
  if (parse_ensemble_kind(kind) == EnsembleKind::deformed_wigner)
    return FreeConvolutionModel::additive(measure(atoms));
  return FreeConvolutionModel::multiplicative(measure(atoms), gamma);
}

RunConfig resolve_text(const std::string& ini, const std::vector<std::string>& overrides) {
  auto values = ini.empty() ? ConfigValues() : ConfigValues::parse(ini);
  for (const auto& o : overrides) values.apply_override(o);
  return resolve(values);
}

}  // namespace

PYBIND11_MODULE(_mesorm, m) {
  m.doc() = "Mesoscopic linear statistics of deformed random matrices";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("stieltjes",
        [](const std::string& kind, const std::vector<std::pair<double, double>>& atoms, double gamma,
           std::complex<double> z) { return model_for(kind, atoms, gamma).stieltjes(z); },
        py::arg("kind"), py::arg("atoms"), py::arg("gamma") = 0.0, py::arg("z"));

  m.def("edges",
        [](const std::string& kind, const std::vector<std::pair<double, double>>& atoms, double gamma) {
          const auto model = model_for(kind, atoms, gamma);
          return py::make_tuple(model.lower_edge(), model.upper_edge(), model.hard_edge());
        },
        py::arg("kind"), py::arg("atoms"), py::arg("gamma") = 0.0);

  m.def("density",
        [](const std::string& kind, const std::vector<std::pair<double, double>>& atoms, double gamma,
           py::array_t<double, py::array::c_style | py::array::forcecast> x) {
          const auto model = model_for(kind, atoms, gamma);
          py::array_t<double> out(std::vector<py::ssize_t>{x.size()});
          auto in = x.unchecked<1>();
          auto res = out.mutable_unchecked<1>();
          for (py::ssize_t i = 0; i < in.shape(0); ++i) res(i) = model.density(in(i));
          return out;
        },
        py::arg("kind"), py::arg("atoms"), py::arg("gamma") = 0.0, py::arg("x"));

  m.def("limit_bulk_variance",
        [](const std::string& shape, int beta, double radius, double amplitude) {
          return limit_bulk_variance(TestProfile::preset(parse_test_shape(shape), radius, amplitude), beta);
        },
        py::arg("shape") = "bump", py::arg("beta") = 1, py::arg("radius") = 1.0, py::arg("amplitude") = 1.0);

  m.def("limit_edge_variance",
        [](const std::string& shape, int beta, double radius, double amplitude) {
          return limit_edge_variance(TestProfile::preset(parse_test_shape(shape), radius, amplitude),
                                     beta, EdgeSide::right);
        },
        py::arg("shape") = "bump", py::arg("beta") = 1, py::arg("radius") = 1.0, py::arg("amplitude") = 1.0);

  m.def("predict_json",
        [](const std::string& ini, const std::vector<std::string>& overrides) {
          const auto rc = resolve_text(ini, overrides);
          const auto& e = rc.experiment;
          const auto model = build_model(e.ensemble, e.solver);
          const auto ctx = KernelContext::make(model, e.ensemble.profile);
          double e0 = e.e0;
          if (e.location == Location::edge_right) e0 = model.upper_edge();
          if (e.location == Location::edge_left) e0 = model.lower_edge();
          const auto spec =
              ContourSpec::for_scale(e.eta0, e.ensemble.dimension(), e.contour_relative_height);
          const nlohmann::json j =
              predict(ctx, ScaledTestFunction{e.profile, e0, e.eta0}, e.location, spec, e.predict_finite);
          return j.dump();
        },
        py::arg("ini") = "", py::arg("overrides") = std::vector<std::string>{});

  m.def("simulate_json",
        [](const std::string& ini, const std::vector<std::string>& overrides) {
          const auto rc = resolve_text(ini, overrides);
          ExperimentReport r;
          {
            py::gil_scoped_release release;
            r = rc.experiment.location == Location::bulk ? run_experiment(rc.experiment)
                                                         : edge_experiment(rc.experiment);
          }
          return nlohmann::json(r).dump();
        },
        py::arg("ini") = "", py::arg("overrides") = std::vector<std::string>{});

  m.def("spectrum",
        [](const std::string& ini, const std::vector<std::string>& overrides, std::uint64_t seed) {
          const auto rc = resolve_text(ini, overrides);
          const auto s = sample_spectrum(rc.experiment.ensemble.with_seed(seed));
          return py::array_t<double>(s.eigenvalues.size(), s.eigenvalues.data());
        },
        py::arg("ini") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("seed") = 1);

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          const int code = run_cli(args, out, err);
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
