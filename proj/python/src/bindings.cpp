#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "effspec/bulk.hpp"
#include "effspec/config.hpp"
#include "effspec/dynamics.hpp"
#include "effspec/empirical.hpp"
#include "effspec/outliers.hpp"
#include "effspec/summary.hpp"

namespace py = pybind11;
using namespace effspec;

namespace {

Scaling scaling_from(const std::string& s) {
  if (s == "data") return Scaling::Data;
  if (s == "theory") return Scaling::Theory;
  throw py::value_error("scaling must be 'data' or 'theory', got '" + s + "'");
}

py::dict support_dict(const SupportSet& s) {
  py::dict d;
  d["intervals"] = s.intervals;
  d["zero_atom"] = s.zero_atom;
  d["warnings"] = s.warnings;
  return d;
}

py::dict root_dict(const OutlierRoot& r) {
  py::dict d;
  d["z"] = r.z;
  d["multiplicity"] = r.multiplicity;
  d["S"] = r.S;
  d["vectors"] = r.vectors;
  d["projections"] = r.projections;
  d["zero_root"] = r.zero_root;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spectra of Hessian and gradient matrices in high-dimensional classification";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::enum_<ProfileKind>(m, "ProfileKind")
      .value("LogisticHessian", ProfileKind::LogisticHessian)
      .value("LogisticGradient", ProfileKind::LogisticGradient)
      .value("TwoLayerHessian", ProfileKind::TwoLayerHessian)
      .value("TwoLayerGradient", ProfileKind::TwoLayerGradient)
      .value("MultiIndexHessian", ProfileKind::MultiIndexHessian)
      .value("MultiIndexGradient", ProfileKind::MultiIndexGradient)
      .value("Custom", ProfileKind::Custom);

  py::class_<Task>(m, "Task")
      .def_readonly("k", &Task::k)
      .def_readonly("C", &Task::C)
      .def_readwrite("lam", &Task::lambda)
      .def_readwrite("phi", &Task::phi)
      .def_readwrite("weights", &Task::weights)
      .def_readwrite("mean_gram", &Task::mean_gram)
      .def_property_readonly("kind", [](const Task& t) { return to_string(t.profile.kind); })
      .def_property_readonly("q", &Task::q)
      .def("validate", &Task::validate);

  m.def(
      "make_logistic_task",
      [](int k, double lam, double phi, const std::string& kind, int alpha) {
        return make_logistic_task(k, lam, phi, profile_kind_from_string(kind), alpha);
      },
      py::arg("k"), py::arg("lam"), py::arg("phi"), py::arg("kind") = "logistic-hessian", py::arg("alpha") = 0);

  py::class_<SummaryMatrix>(m, "Summary")
      .def_static("from_gram", &SummaryMatrix::from_gram, py::arg("G"), py::arg("C"), py::arg("k"))
      .def_readonly("G", &SummaryMatrix::G)
      .def_readonly("sqrtG", &SummaryMatrix::sqrtG)
      .def_readonly("C", &SummaryMatrix::C)
      .def_readonly("k", &SummaryMatrix::k)
      .def_readonly("qbar", &SummaryMatrix::qbar);

  m.def("compute_G", &compute_G, py::arg("x"), py::arg("means"));
  m.def("zero_init_summary", &zero_init_summary, py::arg("task"));
  m.def("gaussian_init_summary", &gaussian_init_summary, py::arg("task"));

  m.def(
      "stieltjes",
      [](const Task& t, const SummaryMatrix& G, cplx z, const std::string& scaling) {
        return solve_stieltjes(z, t, G, scaling_from(scaling));
      },
      py::arg("task"), py::arg("G"), py::arg("z"), py::arg("scaling") = "data");
  m.def(
      "support",
      [](const Task& t, const SummaryMatrix& G, const std::string& scaling) {
        return support_dict(support_intervals(t, G, scaling_from(scaling)));
      },
      py::arg("task"), py::arg("G"), py::arg("scaling") = "data");
  m.def(
      "density",
      [](const Task& t, const SummaryMatrix& G, const std::vector<double>& grid, std::optional<double> eta,
         const std::string& scaling) {
        const StieltjesSolver s(ProfileLaw::from_summary(t, G), scaling_from(scaling));
        return s.density(grid, eta.value_or(s.default_eta()));
      },
      py::arg("task"), py::arg("G"), py::arg("grid"), py::arg("eta") = py::none(), py::arg("scaling") = "data");
  m.def("mp_reference", &mp_reference, py::arg("z"), py::arg("variance"), py::arg("ratio"));
  m.def("mp_edges", &mp_edges, py::arg("variance"), py::arg("ratio"));

  m.def(
      "f_matrix",
      [](const Task& t, const SummaryMatrix& G, double z, const std::string& scaling) {
        return f_matrix(z, t, G, scaling_from(scaling));
      },
      py::arg("task"), py::arg("G"), py::arg("z"), py::arg("scaling") = "data");
  m.def(
      "find_outliers",
      [](const Task& t, const SummaryMatrix& G, const std::string& scaling) {
        const OutlierReport r = find_outliers(t, G, scaling_from(scaling));
        py::list roots;
        for (const auto& root : r.roots()) roots.append(root_dict(root));
        py::dict d;
        d["support"] = support_dict(r.support);
        d["roots"] = roots;
        d["qbar"] = r.qbar;
        d["diagnostics"] = r.diagnostics;
        return d;
      },
      py::arg("task"), py::arg("G"), py::arg("scaling") = "data");
  m.def(
      "zero_init_oracles",
      [](int k, const Vec& p, double lam, double phi, const std::string& kind, int alpha) {
        const ZeroInitOracle o = zero_init_oracles(k, p, lam, phi, profile_kind_from_string(kind), alpha);
        py::list roots;
        for (const auto& r : o.roots) {
          py::dict d;
          d["family"] = r.family;
          d["index"] = r.index;
          d["multiplicity"] = r.multiplicity;
          d["exists"] = r.exists;
          d["z"] = r.z;
          d["S"] = r.S;
          d["threshold"] = r.threshold;
          d["coefficient"] = r.coefficient;
          roots.append(d);
        }
        py::dict d;
        d["roots"] = roots;
        d["edge"] = std::make_pair(o.edge_lo, o.edge_hi);
        d["S_edge"] = o.S_edge;
        return d;
      },
      py::arg("k"), py::arg("p"), py::arg("lam"), py::arg("phi"), py::arg("kind") = "logistic-hessian",
      py::arg("alpha") = 0);

  m.def("drift", [](const Task& t, const SummaryMatrix& G, double beta, double c_eta) { return drift(G, t, beta, c_eta); },
        py::arg("task"), py::arg("G"), py::arg("beta") = 0.0, py::arg("c_eta") = 0.0);
  m.def(
      "integrate",
      [](const Task& t, const SummaryMatrix& G0, double dt, double T, double beta, double c_eta,
         const std::vector<double>& checkpoints) {
        DynamicsConfig cfg;
        cfg.dt = dt;
        cfg.T = T;
        cfg.beta = beta;
        cfg.c_eta = c_eta;
        cfg.checkpoints = checkpoints;
        const Trajectory tr = integrate(G0, t, cfg);
        std::vector<Mat> Gs;
        for (const auto& g : tr.G) Gs.push_back(g.G);
        return std::make_pair(tr.t, Gs);
      },
      py::arg("task"), py::arg("G0"), py::arg("dt"), py::arg("T"), py::arg("beta") = 0.0, py::arg("c_eta") = 0.0,
      py::arg("checkpoints") = std::vector<double>{});

  // One empirical replica: sample n = round(phi d) points at the given summary and diagonalize.
  m.def(
      "empirical_spectrum",
      [](const Task& t, const SummaryMatrix& G, int d, std::uint64_t seed) {
        EmpiricalInstance inst = make_instance(t, d, seed);
        if (G.G.topLeftCorner(G.C, G.C).norm() > 0 || G.G.topRightCorner(G.C, G.k).norm() > 0)
          realize_summary(inst, G, seed + 1);
        const Batch b = sample_batch(t, inst.means, inst.n, seed + 2);
        return eigensolve(assemble_profile_block(t, inst.x, inst.means, b)).values;
      },
      py::arg("task"), py::arg("G"), py::arg("d"), py::arg("seed") = 1);
  m.def(
      "ks_distance",
      [](const Task& t, const SummaryMatrix& G, const Vec& eigenvalues) {
        return ks_distance(eigenvalues, predict(t, G));
      },
      py::arg("task"), py::arg("G"), py::arg("eigenvalues"));

  m.def(
      "load_scenario",
      [](const std::string& path) {
        const Scenario s = load_scenario(path);
        return std::make_tuple(s.task, initial_summary(s), canonical_json(s));
      },
      py::arg("path"));
}
