#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "slelab/cli.hpp"
#include "slelab/conformal_maps.hpp"
#include "slelab/ensemble.hpp"
#include "slelab/errors.hpp"
#include "slelab/experiments.hpp"
#include "slelab/loewner.hpp"
#include "slelab/sde_drivers.hpp"

namespace py = pybind11;
using namespace slelab;

namespace {

DrivingPath make_path(std::vector<double> times, std::vector<double> values)
{
    DrivingPath p{std::move(times), std::move(values)};
    p.validate();
    return p;
}

std::vector<SlitStep> steps_of(const MapComposition& c)
{
    return {c.steps().begin(), c.steps().end()};
}

std::string run_suite(const std::string& suite, const std::string& config_text)
{
    std::istringstream in(config_text);
    const RunConfig rc = parse_config(in);
    const ExperimentConfig& cfg = rc.experiment;
    SuiteReport r;
    {
        py::gil_scoped_release release;
        if (suite == "martingale") {
            r = run_martingale_test(cfg);
        } else if (suite == "mstar") {
            r = run_mstar_test(cfg);
        } else if (suite == "identities") {
            r = run_identity_checks(cfg);
        } else if (suite == "coupling") {
            r = run_coupling_test(cfg);
        } else if (suite == "reversibility") {
            r = run_reversibility_test(cfg);
        } else {
            throw ParameterError("unknown suite: " + suite);
        }
    }
    return rc.format == "csv" ? report_csv(r) : report_json(r);
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Chordal Loewner evolution and two-sided SLE experiments";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<BranchError>(m, "BranchError", PyExc_ArithmeticError);
    py::register_exception<ZipperError>(m, "ZipperError", PyExc_RuntimeError);
    py::register_exception<InvariantError>(m, "InvariantError", PyExc_RuntimeError);
    py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("apply_slit", [](double xi, double dt, Complex z) { return apply_slit({xi, dt}, z); },
          py::arg("xi"), py::arg("dt"), py::arg("z"));
    m.def("slit_jet",
          [](double xi, double dt, Complex z) {
              const Jet3 j = slit_jet({xi, dt}, z);
              return py::make_tuple(j.f, j.f1, j.f2, j.f3);
          },
          py::arg("xi"), py::arg("dt"), py::arg("z"));

    py::class_<MapComposition>(m, "MapComposition")
        .def("__len__", &MapComposition::size)
        .def("apply", [](const MapComposition& c, Complex z) { return compose_apply(c.steps(), z); })
        .def("jet",
             [](const MapComposition& c, Complex z) {
                 const Jet3 j = compose_jet(c.steps(), z);
                 return py::make_tuple(j.f, j.f1, j.f2, j.f3);
             })
        .def("invert", [](const MapComposition& c, Complex w) { return invert_apply(c.steps(), w); })
        .def("hcap", [](const MapComposition& c) { return hcap(c.steps()); })
        .def("steps", [](const MapComposition& c) {
            std::vector<std::pair<double, double>> out;
            for (const SlitStep& s : steps_of(c)) {
                out.emplace_back(s.xi, s.dt);
            }
            return out;
        });

    m.def("evolve",
          [](std::vector<double> times, std::vector<double> values) {
              return evolve(make_path(std::move(times), std::move(values)));
          },
          py::arg("times"), py::arg("values"));
    m.def("trace",
          [](std::vector<double> times, std::vector<double> values) {
              const Trace tr = trace(make_path(std::move(times), std::move(values)));
              return py::make_tuple(tr.times, tr.points);
          },
          py::arg("times"), py::arg("values"),
          "Returns (times, tip points) of the trace generated by the driving samples.");
    m.def("extract_driving",
          [](const std::vector<Complex>& points) {
              const Unzipped z = extract_driving(points);
              return py::make_tuple(z.path.times, z.path.values);
          },
          py::arg("points"));
    m.def("exit_time",
          [](const std::vector<double>& times, const std::vector<Complex>& points,
             const std::string& hull) {
              Trace tr;
              tr.times = times;
              tr.points = points;
              const ExitTime e = exit_time(tr, parse_hull(hull));
              return py::make_tuple(e.time, e.exited);
          },
          py::arg("times"), py::arg("points"), py::arg("hull"));

    m.def("standard_sle_driver",
          [](double kappa, double dt, std::size_t n, std::uint64_t seed, std::uint64_t stream) {
              const DrivingPath p = standard_sle_driver(kappa, dt, n, {seed, stream});
              return py::make_tuple(p.times, p.values);
          },
          py::arg("kappa"), py::arg("dt"), py::arg("n"), py::arg("seed"), py::arg("stream") = 0);
    m.def("pair_driver",
          [](double kappa, double x1, double x2, double dt, std::size_t n, std::uint64_t seed,
             std::uint64_t stream) {
              const PairDriver d = build_pair_driver(kappa, x1, x2, dt, n, {seed, stream});
              py::list sides;
              for (const SideDriver& s : d.side) {
                  py::dict side;
                  side["times"] = s.xi.times;
                  side["xi"] = s.xi.values;
                  side["force"] = s.p;
                  side["gap"] = s.y;
                  side["stopped"] = s.stopped;
                  sides.append(side);
              }
              return sides;
          },
          py::arg("kappa"), py::arg("x1"), py::arg("x2"), py::arg("dt"), py::arg("n"),
          py::arg("seed"), py::arg("stream") = 0);

    m.def("martingale_value",
          [](double kappa, double x1, double x2, double dt, std::size_t n1, std::size_t n2,
             std::uint64_t seed, std::uint64_t stream) {
              MartingaleRecord r;
              {
                  py::gil_scoped_release release;
                  const PairDriver d =
                      build_pair_driver(kappa, x1, x2, dt, std::max(n1, n2), {seed, stream});
                  const EnsemblePair pair = make_ensemble_pair(d, n1, n2);
                  r = compute_M(pair, std::min(n1, pair.steps(0)), std::min(n2, pair.steps(1)));
              }
              py::dict out;
              out["t1"] = r.t1;
              out["t2"] = r.t2;
              out["E"] = r.E;
              out["N"] = r.N;
              out["I"] = r.I;
              out["M"] = r.M;
              out["valid"] = r.valid;
              return out;
          },
          py::arg("kappa"), py::arg("x1"), py::arg("x2"), py::arg("dt"), py::arg("n1"),
          py::arg("n2"), py::arg("seed"), py::arg("stream") = 0);

    m.def("kolmogorov_q", &kolmogorov_q, py::arg("lam"));
    m.def("ks_two_sample",
          [](const std::vector<double>& xs, const std::vector<double>& ys, double alpha) {
              const KsResult k = ks_two_sample(xs, ys, alpha);
              return py::make_tuple(k.statistic, k.p_value, k.pass);
          },
          py::arg("xs"), py::arg("ys"), py::arg("alpha") = 0.01);
    m.def("weighted_ks",
          [](const std::vector<double>& xs, const std::vector<double>& ws,
             const std::vector<double>& ys, double alpha) {
              const KsResult k = weighted_ks(xs, ws, ys, alpha);
              return py::make_tuple(k.statistic, k.n_eff, k.p_value, k.pass);
          },
          py::arg("xs"), py::arg("weights"), py::arg("ys"), py::arg("alpha") = 0.01);

    m.def("run_suite", &run_suite, py::arg("suite"), py::arg("config_text") = "",
          "Runs one experiment suite on a key = value configuration and returns the report.");
}
