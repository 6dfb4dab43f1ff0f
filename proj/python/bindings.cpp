#include "effpop/cli.hpp"
#include "effpop/coalescent.hpp"
#include "effpop/equilibrium.hpp"
#include "effpop/flows.hpp"
#include "effpop/ibm.hpp"
#include "effpop/parallel.hpp"
#include "effpop/sde.hpp"
#include "effpop/zoo.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace effpop;

namespace {

py::dict report_dict(const EquilibriumReport& r) {
  std::vector<std::complex<double>> eig = r.jacobian_eigenvalues;
  py::dict d;
  d["h_tilde"] = r.h_tilde;
  d["h"] = r.h;
  d["pi"] = r.pi;
  d["eigenvalues"] = eig;
  d["stable"] = r.stable;
  d["n_e"] = r.n_e;
  d["sigma_sq"] = r.sigma_sq;
  d["sigma_sq_ancestral"] = r.sigma_sq_ancestral;
  d["mean_matrix"] = r.mean_matrix;
  return d;
}

// Stack E x K states into a (T, E, K) array.
py::array_t<double> stack(const std::vector<Matrix>& states) {
  const auto t = static_cast<py::ssize_t>(states.size());
  const auto e = states.empty() ? 0 : static_cast<py::ssize_t>(states[0].rows());
  const auto k = states.empty() ? 0 : static_cast<py::ssize_t>(states[0].cols());
  py::array_t<double> out({t, e, k});
  auto view = out.mutable_unchecked<3>();
  for (py::ssize_t i = 0; i < t; ++i)
    for (py::ssize_t x = 0; x < e; ++x)
      for (py::ssize_t j = 0; j < k; ++j) view(i, x, j) = states[static_cast<std::size_t>(i)](x, j);
  return out;
}

}  // namespace

PYBIND11_MODULE(_effpop, m) {
  m.doc() = "Equilibrium analysis, projections and simulators for decomposable population models";

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    }
  });

  py::class_<ZooEntry>(m, "Model")
      .def_property_readonly("name", [](const ZooEntry& z) { return z.name; })
      .def_property_readonly("labels", [](const ZooEntry& z) { return z.model.space.labels(); })
      .def_property_readonly("parameters", [](const ZooEntry& z) { return z.parameters.dump(); })
      .def_property_readonly("guess", [](const ZooEntry& z) { return z.guess; })
      .def("F", [](const ZooEntry& z, const Vector& v) { return z.model.F(v); }, py::arg("v"))
      .def("drift", [](const ZooEntry& z, const Vector& v) { return drift(z.model, v); }, py::arg("v"))
      .def("total_covariance", [](const ZooEntry& z, const Vector& v) { return total_covariance(z.model, v); },
           py::arg("v"))
      .def("__repr__", [](const ZooEntry& z) { return "<effpop.Model " + z.name + " " + z.parameters.dump() + ">"; });

  m.def("zoo_names", &zoo_names);

  m.def(
      "make_model",
      [](const std::string& name, const std::string& parameters_json) {
        return make_zoo_entry(name, nlohmann::json::parse(parameters_json));
      },
      py::arg("name"), py::arg("parameters_json") = "{}",
      "Builds a zoo model; parameters are passed as a JSON object string.");

  m.def(
      "analyze",
      [](const ZooEntry& z, std::optional<Vector> guess) {
        return report_dict(analyze(z.model, guess ? *guess : z.guess));
      },
      py::arg("model"), py::arg("guess") = py::none());

  m.def(
      "project",
      [](const ZooEntry& z, const Matrix& u0) {
        const EquilibriumReport r = analyze(z.model, z.guess);
        const ProjectionResult p = katzenberger_projection(z.model, r, u0);
        py::dict d;
        d["theta"] = p.theta;
        d["pi"] = p.pi;
        d["H"] = p.H_of_v;
        return d;
      },
      py::arg("model"), py::arg("u0"));

  m.def(
      "simulate_fractions",
      [](const ZooEntry& z, const Matrix& u0, double N, double t_end, std::uint64_t seed, std::size_t replicates,
         double dt, std::size_t max_records) {
        SimulationConfig c;
        c.N = N;
        c.K = static_cast<std::size_t>(u0.cols());
        c.t_end = t_end;
        c.seed = seed;
        c.replicates = replicates;
        c.dt = dt;
        c.max_records = max_records;
        std::vector<Trajectory> runs;
        {
          py::gil_scoped_release release;
          runs = simulate_fractions_batch(z.model, u0, c);
        }
        py::list out;
        for (const auto& tr : runs) out.append(py::make_tuple(tr.times, stack(tr.states)));
        return out;
      },
      py::arg("model"), py::arg("u0"), py::arg("N") = 200.0, py::arg("t_end") = 1.0, py::arg("seed") = 0,
      py::arg("replicates") = 1, py::arg("dt") = 0.0, py::arg("max_records") = 256,
      "Returns a list of (times, states) with states shaped (T, E, K).");

  m.def(
      "simulate_wright_fisher",
      [](const Vector& theta0, double dt, double t_end, std::uint64_t seed, std::size_t replicates,
         std::size_t max_records) {
        std::vector<Trajectory> runs;
        {
          py::gil_scoped_release release;
          runs = simulate_wright_fisher_batch(theta0, dt, t_end, seed, replicates, max_records);
        }
        py::list out;
        for (const auto& tr : runs) out.append(py::make_tuple(tr.times, stack(tr.states)));
        return out;
      },
      py::arg("theta0"), py::arg("dt") = 1e-3, py::arg("t_end") = 1.0, py::arg("seed") = 0,
      py::arg("replicates") = 1, py::arg("max_records") = 256);

  m.def("theta_hat", &theta_hat, py::arg("u"), py::arg("h"));

  m.def(
      "coalescence_time",
      [](const ZooEntry& z, double N) {
        const EquilibriumReport r = analyze(z.model, z.guess);
        return expected_pair_coalescence_time(build_rates(r, N));
      },
      py::arg("model"), py::arg("N"), "Exact expected pair coalescence time from the stationary start.");

  m.def(
      "gillespie_time_average",
      [](const ZooEntry& z, double N, double t_end, double burn_in, std::uint64_t seed, std::uint32_t stream) {
        if (!z.rates) throw ConfigError("model '" + z.name + "' has no individual-based event set");
        const EquilibriumReport r = analyze(z.model, z.guess);
        Eigen::VectorXi start(r.h_tilde.size());
        for (Eigen::Index x = 0; x < start.size(); ++x) start[x] = static_cast<int>(std::lround(r.h_tilde[x] * N));
        GillespieOptions o;
        o.burn_in = burn_in;
        py::gil_scoped_release release;
        return Vector(gillespie(*z.rates, N, start, t_end, seed, o, stream).time_average);
      },
      py::arg("model"), py::arg("N"), py::arg("t_end"), py::arg("burn_in") = 0.0, py::arg("seed") = 0,
      py::arg("stream") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> all{"effpop"};
        all.insert(all.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : all) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
