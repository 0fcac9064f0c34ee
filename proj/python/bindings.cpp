#include "mmc/diagnostics.hpp"
#include "mmc/harness.hpp"
#include "mmc/hmc.hpp"
#include "mmc/keyvalue.hpp"
#include "mmc/modefinder.hpp"
#include "mmc/regeneration.hpp"
#include "mmc/target.hpp"
#include "mmc/wormhole.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace mmc;

namespace {

mmc::Objective make_objective(py::function value, py::function gradient) {
  return {[value](const Vec& x) { return value(x).cast<double>(); },
          [gradient](const Vec& x) { return gradient(x).cast<Vec>(); }};
}

}  // namespace

PYBIND11_MODULE(mmcmc, m) {
  m.doc() = "Multimodal MCMC: wormhole HMC with optimization-driven mode discovery";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  // numerics
  py::class_<BfgsResult>(m, "BfgsResult")
      .def_readonly("maximizer", &BfgsResult::maximizer)
      .def_readonly("objective_value", &BfgsResult::objective_value)
      .def_readonly("iterations", &BfgsResult::iterations)
      .def_readonly("converged", &BfgsResult::converged)
      .def_readonly("gradient_norm", &BfgsResult::gradient_norm);
  m.def(
      "bfgs_maximize",
      [](py::function value, py::function gradient, const Vec& start, double tol,
         int max_iter) {
        return bfgs_maximize(make_objective(value, gradient), start, tol, max_iter);
      },
      py::arg("value"), py::arg("gradient"), py::arg("start"),
      py::arg("tol") = 1e-6, py::arg("max_iter") = 500);
  m.def("cholesky_spd", &cholesky_spd);

  // targets
  py::class_<TargetDistribution, std::shared_ptr<TargetDistribution>>(m, "Target")
      .def_property_readonly("dimension", &TargetDistribution::dimension)
      .def("log_density", &TargetDistribution::log_density)
      .def("gradient", &TargetDistribution::gradient)
      .def("reference_moments",
           [](const TargetDistribution& t) -> py::object {
             const auto mo = t.reference_moments();
             if (!mo) return py::none();
             return py::make_tuple(mo->mean, mo->covariance);
           })
      .def("describe", &TargetDistribution::describe);

  py::class_<GaussianMixture, TargetDistribution, std::shared_ptr<GaussianMixture>>(
      m, "GaussianMixture")
      .def(py::init<std::vector<double>, std::vector<Vec>, std::vector<Mat>>(),
           py::arg("weights"), py::arg("means"), py::arg("covariances"))
      .def_property_readonly("weights", &GaussianMixture::weights)
      .def_property_readonly("means", &GaussianMixture::means)
      .def("to_text", [](const GaussianMixture& g) {
        std::ostringstream out;
        g.write(out);
        return out.str();
      });
  m.def(
      "gmm_generate_benchmark",
      [](std::size_t dim, std::size_t k, const std::string& scheme,
         std::uint64_t seed) {
        if (scheme != "equal" && scheme != "prop") {
          throw py::value_error("scheme must be 'equal' or 'prop'");
        }
        const auto s = scheme == "equal" ? WeightScheme::equal : WeightScheme::proportional;
        return std::make_shared<GaussianMixture>(gmm_generate_benchmark(dim, k, s, seed));
      },
      py::arg("dim"), py::arg("k"), py::arg("scheme") = "equal", py::arg("seed") = 1);

  py::class_<SensorNetwork, TargetDistribution, std::shared_ptr<SensorNetwork>>(
      m, "SensorNetwork")
      .def_property_readonly("sensors", &SensorNetwork::sensors)
      .def_property_readonly("range", &SensorNetwork::range)
      .def_property_readonly("sigma", &SensorNetwork::sigma)
      .def("to_text", [](const SensorNetwork& s) {
        std::ostringstream out;
        s.write(out);
        return out.str();
      });
  m.def(
      "sensor_generate_instance",
      [](std::size_t n, double range, double sigma, std::uint64_t seed) {
        return std::make_shared<SensorNetwork>(
            sensor_generate_instance(n, range, sigma, seed));
      },
      py::arg("sensors"), py::arg("range") = 0.3, py::arg("sigma") = 0.02,
      py::arg("seed") = 1);

  // hmc and wormhole
  m.def(
      "leapfrog",
      [](const TargetDistribution& t, const Vec& x, const Vec& p, double eps, int n) {
        const auto r = leapfrog(t, x, p, eps, n);
        return py::make_tuple(r.x, r.p, r.ok);
      },
      py::arg("target"), py::arg("x"), py::arg("p"), py::arg("eps"), py::arg("n"));
  m.def("acceptance_probability", &acceptance_probability);
  m.def(
      "wormhole_mollifier",
      [](const Vec& a, const Vec& b, const Vec& x, double influence) {
        return mollifier(Wormhole::connect(a, b, 1e-4, influence), x);
      },
      py::arg("start"), py::arg("end"), py::arg("x"), py::arg("influence") = 0.1);
  m.def(
      "wormhole_metric",
      [](const Vec& a, const Vec& b, double epsilon_w) {
        return wormhole_metric(Wormhole::connect(a, b, epsilon_w, 0.1));
      },
      py::arg("start"), py::arg("end"), py::arg("epsilon_w") = 1e-4);

  // modefinder
  py::class_<ModeRecord>(m, "ModeRecord")
      .def_readonly("location", &ModeRecord::location)
      .def_readonly("covariance", &ModeRecord::covariance)
      .def_readonly("weight", &ModeRecord::weight)
      .def_readonly("index", &ModeRecord::index)
      .def_property_readonly("kind", [](const ModeRecord& r) { return to_string(r.kind); });
  py::class_<ModeRegistry>(m, "ModeRegistry")
      .def(py::init<>())
      .def("__len__", &ModeRegistry::size)
      .def_property_readonly("records", &ModeRegistry::records)
      .def_readonly("n_bfgs", &ModeRegistry::n_bfgs)
      .def("density_estimate", [](const ModeRegistry& r, const Vec& x) {
        return mode_density_estimate(r, x);
      });
  m.def(
      "find_all_modes",
      [](const TargetDistribution& t, std::uint64_t seed, int budget) {
        ModeRegistry reg;
        ModeFinderConfig cfg;
        cfg.budget = budget;
        Rng rng = make_stream(seed, 0);
        while (find_new_mode(t, reg, budget, cfg, HmcParams{}, rng).index) {
        }
        return reg;
      },
      py::arg("target"), py::arg("seed") = 1, py::arg("budget") = 3);
  m.def(
      "fictitious_mode_audit",
      [](const TargetDistribution& t, const ModeRegistry& reg) {
        std::vector<std::tuple<std::size_t, double, double, bool>> out;
        for (const auto& r : fictitious_mode_audit(t, reg)) {
          out.emplace_back(r.k, r.delta_x, r.cumulative, r.ok);
        }
        return out;
      });

  // diagnostics and regeneration
  m.def("rem", &rem);
  m.def("recov", &recov);
  m.def("pooled_mean", &pooled_mean);
  m.def("regeneration_probability", &regeneration_probability,
        py::arg("pi_t"), py::arg("q_t"), py::arg("pi_t1"), py::arg("q_t1"),
        py::arg("c"));

  // harness
  m.def("list_presets", &list_presets);
  m.def("explain_defaults", &explain_defaults);
  m.def("check_config", [](const std::string& text) {
    return serialize_config(parse_config(text));
  });
  m.def(
      "run_experiment",
      [](const std::string& text) {
        ExperimentOutcome o;
        {
          py::gil_scoped_release release;
          o = run_experiment(parse_config(text));
        }
        py::dict d;
        d["final_rem"] = o.final_rem;
        d["final_recov"] = o.final_recov;
        d["n_bfgs"] = o.result.registry.n_bfgs;
        d["modes_found"] = o.result.registry.size();
        d["cumulative_delta_x"] = o.cumulative_delta_x;
        d["stem"] = o.stem;
        return d;
      },
      py::arg("config_text"));
}
