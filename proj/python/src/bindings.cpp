#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

#include "clustermatch/bootstrap.hpp"
#include "clustermatch/dataset.hpp"
#include "clustermatch/error.hpp"
#include "clustermatch/matching.hpp"
#include "clustermatch/pipeline.hpp"
#include "clustermatch/simulation.hpp"
#include "clustermatch/transforms.hpp"

namespace py = pybind11;
using namespace clustermatch;

namespace {

// Option strings are the CLI's spellings.
Estimand parse_estimand(const std::string& s) {
  if (s == "ate") return Estimand::ATE;
  if (s == "att") return Estimand::ATT;
  throw py::value_error("estimand must be 'ate' or 'att'");
}

MatchScheme parse_scheme(const std::string& s) {
  if (s == "cluster") return MatchScheme::ClusterOnly;
  if (s == "all") return MatchScheme::ClusterAndUnit;
  throw py::value_error("match_on must be 'cluster' or 'all'");
}

TieHandling parse_ties(const std::string& s) {
  if (s == "lowest-id") return TieHandling::LowestId;
  if (s == "average") return TieHandling::Average;
  throw py::value_error("ties must be 'lowest-id' or 'average'");
}

BootstrapKind parse_bootstrap(const std::string& s) {
  if (s == "cluster") return BootstrapKind::ClusterWeighted;
  if (s == "unit") return BootstrapKind::UnitWeighted;
  throw py::value_error("bootstrap must be 'cluster' or 'unit'");
}

std::optional<BasisSpec> parse_basis(const std::string& s, int degree, int knots) {
  BasisSpec b;
  b.degree = degree;
  b.knots_per_dim = knots;
  if (s == "sieve") return b;
  if (s == "spline") {
    b.kind = BasisKind::LinearSpline;
    return b;
  }
  if (s == "none") return std::nullopt;
  throw py::value_error("bias_correct must be 'sieve', 'spline' or 'none'");
}

Procedure parse_procedure(const std::string& s) {
  for (auto p : {Procedure::P1, Procedure::P2, Procedure::P3, Procedure::P4})
    if (s == to_string(p)) return p;
  throw py::value_error("unknown procedure '" + s + "'");
}

MatchConfig match_config(int m, const std::string& match_on, const std::string& ties, double ridge, unsigned threads) {
  MatchConfig c;
  c.m = m;
  c.scheme = parse_scheme(match_on);
  c.ties = parse_ties(ties);
  c.ridge = ridge;
  c.threads = threads;
  return c;
}

py::dict report_dict(const Estimation& e) {
  py::dict d;
  d["estimand"] = std::string(to_string(e.report.estimand));
  d["tau_mat"] = e.report.tau_mat;
  d["bias_term"] = e.report.b_hat;
  d["tau"] = e.report.tau;
  d["variance"] = e.report.variance;
  d["ci_lo"] = e.report.ci.first;
  d["ci_hi"] = e.report.ci.second;
  d["psi"] = e.report.psi;
  d["replicates"] = e.bootstrap.replicates;
  d["sigma1_sq"] = e.plugin.sigma1_sq;
  d["sigma2_sq"] = e.plugin.sigma2_sq;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bias-corrected matching estimators for clustered observational data.";

  py::register_exception<Error>(m, "ClusterMatchError", PyExc_ValueError);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n_units", &Dataset::n_units)
      .def_property_readonly("n_clusters", &Dataset::n_clusters)
      .def_property_readonly("n_treated", &Dataset::n_treated)
      .def_property_readonly("n_control", &Dataset::n_control)
      .def_property_readonly("unit_covariate_names", [](const Dataset& d) { return d.unit_covariate_names; })
      .def_property_readonly("cluster_covariate_names", [](const Dataset& d) { return d.cluster_covariate_names; })
      .def_property_readonly("outcomes", &Dataset::outcomes)
      .def_property_readonly("treatments", &Dataset::treatments)
      .def_property_readonly("cluster_of", &Dataset::cluster_of)
      .def_property_readonly("unit_covariates", &Dataset::unit_covariate_matrix)
      .def_property_readonly("cluster_covariates", &Dataset::cluster_covariate_matrix)
      .def("__repr__", [](const Dataset& d) {
        return "<Dataset units=" + std::to_string(d.n_units()) + " clusters=" + std::to_string(d.n_clusters()) + ">";
      });

  m.def(
      "make_dataset",
      [](const std::vector<std::string>& clusters, const std::vector<int>& treatment, const std::vector<double>& outcome,
         const Eigen::MatrixXd& unit_covariates, const Eigen::MatrixXd& cluster_covariates, bool unit_level,
         std::vector<std::string> unit_names, std::vector<std::string> cluster_names) {
        auto ds = make_dataset(clusters, treatment, outcome, unit_covariates, cluster_covariates,
                               unit_level ? TreatmentLevel::UnitLevel : TreatmentLevel::ClusterLevel,
                               std::move(unit_names), std::move(cluster_names));
        require_valid(ds);
        return ds;
      },
      py::arg("clusters"), py::arg("treatment"), py::arg("outcome"), py::arg("unit_covariates"),
      py::arg("cluster_covariates"), py::arg("unit_level") = false, py::arg("unit_names") = std::vector<std::string>{},
      py::arg("cluster_names") = std::vector<std::string>{},
      "Build a dataset from per-unit arrays; cluster covariates must be constant within clusters.");

  m.def(
      "read_csv",
      [](const std::string& path, const std::string& outcome, const std::string& treatment, const std::string& cluster,
         std::vector<std::string> unit_covariates, std::vector<std::string> cluster_covariates, bool unit_level) {
        Schema s{outcome, treatment, cluster, std::move(unit_covariates), std::move(cluster_covariates),
                 unit_level ? TreatmentLevel::UnitLevel : TreatmentLevel::ClusterLevel};
        auto ds = ingest_dataset(path, s);
        require_valid(ds);
        return ds;
      },
      py::arg("path"), py::arg("outcome"), py::arg("treatment"), py::arg("cluster"),
      py::arg("unit_covariates") = std::vector<std::string>{}, py::arg("cluster_covariates") = std::vector<std::string>{},
      py::arg("unit_level") = false);

  m.def(
      "box_cox",
      [](Dataset& ds, const std::string& column) {
        const auto t = box_cox_column(ds, column);
        return py::make_tuple(t.lambda, t.shift);
      },
      py::arg("dataset"), py::arg("column"), "Fit and apply a Box-Cox transform in place; returns (lambda, shift).");

  m.def(
      "box_cox_fit",
      [](const std::vector<double>& v) {
        const auto t = box_cox_fit(v);
        return py::make_tuple(t.lambda, t.shift);
      },
      py::arg("values"));

  py::class_<MatchResult>(m, "MatchResult")
      .def_readonly("matched_sets", &MatchResult::matched_sets)
      .def_readonly("k_counts", &MatchResult::k_counts)
      .def_readonly("k_weight", &MatchResult::k_weight)
      .def_readonly("y0_hat", &MatchResult::y0_hat)
      .def_readonly("y1_hat", &MatchResult::y1_hat)
      .def_readonly("m", &MatchResult::m);

  m.def(
      "match",
      [](const Dataset& ds, const std::string& estimand, int k, const std::string& match_on, const std::string& ties,
         double ridge, unsigned threads) {
        return match_units(ds, match_config(k, match_on, ties, ridge, threads), parse_estimand(estimand));
      },
      py::arg("dataset"), py::arg("estimand") = "ate", py::arg("m") = 3, py::arg("match_on") = "all",
      py::arg("ties") = "lowest-id", py::arg("ridge") = 0.0, py::arg("threads") = 1u,
      "Mahalanobis nearest-neighbour matching with replacement.");

  m.def(
      "estimate",
      [](const Dataset& ds, const std::string& estimand, int k, const std::string& match_on,
         const std::string& bias_correct, int degree, int knots, const std::string& bootstrap, int reps,
         std::uint64_t seed, double level, const std::string& ties, double ridge, unsigned threads) {
        EstimationConfig cfg;
        cfg.estimand = parse_estimand(estimand);
        cfg.match = match_config(k, match_on, ties, ridge, threads);
        cfg.basis = parse_basis(bias_correct, degree, knots);
        cfg.bootstrap.kind = parse_bootstrap(bootstrap);
        cfg.bootstrap.reps = reps;
        cfg.bootstrap.seed = seed;
        cfg.bootstrap.level = level;
        cfg.bootstrap.threads = threads;
        Estimation e;
        {
          py::gil_scoped_release release;
          e = estimate(ds, cfg);
        }
        return report_dict(e);
      },
      py::arg("dataset"), py::arg("estimand") = "ate", py::arg("m") = 3, py::arg("match_on") = "all",
      py::arg("bias_correct") = "sieve", py::arg("degree") = 2, py::arg("knots") = 3, py::arg("bootstrap") = "cluster",
      py::arg("reps") = 1000, py::arg("seed") = 1, py::arg("level") = 0.95, py::arg("ties") = "lowest-id",
      py::arg("ridge") = 0.0, py::arg("threads") = 1u,
      "Bias-corrected matching estimate with a bootstrap variance and normal confidence interval.");

  m.def(
      "balance",
      [](const Dataset& ds, const MatchResult* match) {
        py::list rows;
        for (const auto& r : balance_table(ds, match).rows) {
          py::dict d;
          d["covariate"] = r.covariate;
          d["smd_unadjusted"] = r.smd_unadjusted;
          if (r.smd_adjusted) d["smd_adjusted"] = *r.smd_adjusted;
          rows.append(d);
        }
        return rows;
      },
      py::arg("dataset"), py::arg("match") = nullptr, "Standardized mean differences per covariate.");

  m.def("g_transform", &g_transform, py::arg("x"));
  m.def("treatment_probability", &treatment_probability, py::arg("z"));

  m.def(
      "simulate",
      [](int clusters, int size_lo, int size_hi, double gamma, int reps, int bootstrap_reps, std::uint64_t seed,
         const std::string& estimand, const std::vector<std::string>& procedures, int degree, const std::string& ties,
         unsigned threads) {
        SimulationConfig cfg;
        cfg.r_clusters = clusters;
        cfg.cluster_size = ClusterSize::uniform(size_lo, size_hi < 0 ? size_lo : size_hi);
        cfg.gamma = gamma;
        cfg.reps = reps;
        cfg.bootstrap_reps = bootstrap_reps;
        cfg.seed = seed;
        cfg.estimand = parse_estimand(estimand);
        cfg.procedures.clear();
        for (const auto& p : procedures) cfg.procedures.push_back(parse_procedure(p));
        cfg.basis.degree = degree;
        cfg.ties = parse_ties(ties);
        cfg.threads = threads;
        SimulationSummary s;
        {
          py::gil_scoped_release release;
          s = monte_carlo(cfg);
        }
        py::list cells;
        for (const auto& c : s.cells) {
          py::dict d;
          d["procedure"] = std::string(to_string(c.procedure));
          d["bias"] = c.bias;
          d["avg_variance"] = c.avg_variance;
          d["empirical_variance"] = c.empirical_variance;
          d["coverage"] = c.coverage;
          d["reps"] = c.reps_used;
          cells.append(d);
        }
        return cells;
      },
      py::arg("clusters") = 50, py::arg("cluster_size") = 50, py::arg("cluster_size_max") = -1,
      py::arg("gamma") = 2.0, py::arg("reps") = 200, py::arg("bootstrap_reps") = 500, py::arg("seed") = 20240101,
      py::arg("estimand") = "ate", py::arg("procedures") = std::vector<std::string>{"P1", "P2", "P3", "P4"},
      py::arg("degree") = 2, py::arg("ties") = "average", py::arg("threads") = 1u,
      "Monte Carlo study; cluster sizes are uniform on [cluster_size, cluster_size_max] when the maximum is given.");
}
