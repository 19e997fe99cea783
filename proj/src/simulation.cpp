#include "clustermatch/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>

#include <fmt/format.h>

#include "clustermatch/error.hpp"
#include "clustermatch/parallel.hpp"
#include "clustermatch/pipeline.hpp"
#include "clustermatch/random.hpp"

namespace clustermatch {

std::string_view to_string(Procedure p) {
  switch (p) {
    case Procedure::P1: return "P1";
    case Procedure::P2: return "P2";
    case Procedure::P3: return "P3";
    case Procedure::P4: return "P4";
  }
  return "?";
}

MatchScheme scheme_of(Procedure p) {
  return p == Procedure::P1 || p == Procedure::P2 ? MatchScheme::ClusterOnly : MatchScheme::ClusterAndUnit;
}

BootstrapKind bootstrap_of(Procedure p) {
  return p == Procedure::P1 || p == Procedure::P3 ? BootstrapKind::ClusterWeighted : BootstrapKind::UnitWeighted;
}

std::string SimulationConfig::design_label() const {
  if (cluster_size.balanced()) return fmt::format("({},{})", r_clusters, cluster_size.lo);
  return fmt::format("({},[{},{}])", r_clusters, cluster_size.lo, cluster_size.hi);
}

void validate(const SimulationConfig& cfg) {
  if (cfg.r_clusters < 2) throw DomainError("simulation: need at least 2 clusters");
  if (cfg.cluster_size.lo < 1 || cfg.cluster_size.hi < cfg.cluster_size.lo)
    throw DomainError("simulation: cluster sizes must satisfy 1 <= lo <= hi");
  if (cfg.reps < 1) throw DomainError("simulation: reps must be >= 1");
  if (cfg.bootstrap_reps < 2) throw DomainError("simulation: bootstrap reps must be >= 2");
  if (cfg.m < 1) throw DomainError("simulation: m must be >= 1");
  if (cfg.procedures.empty()) throw DomainError("simulation: no procedures selected");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw DomainError("simulation: level must be in (0,1)");
}

double g_transform(double x) { return 1.0 + 1.0 / (1.0 + std::exp(-20.0 * (x - 1.0 / 3.0))); }

double treatment_probability(double z) {
  if (!(z >= 0.0 && z <= 1.0)) throw DomainError(fmt::format("treatment_probability: z = {} outside [0,1]", z));
  const double z2 = z * z;
  const double cdf = 20.0 * (z2 / 2.0 - z2 * z + 0.75 * z2 * z2 - z2 * z2 * z / 5.0);
  return (1.0 + cdf) / 4.0;
}

namespace {

void standardize_in_place(Eigen::Ref<Eigen::VectorXd> v) {
  const double mean = v.mean();
  v.array() -= mean;
  const double sd = std::sqrt(v.squaredNorm() / static_cast<double>(v.size() - 1));
  if (!(sd > 0.0)) throw DomainError("simulation: transformed covariate is constant");
  v /= sd;
}

std::optional<GeneratedData> generate_attempt(const SimulationConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> unif01(0.0, 1.0);
  std::uniform_real_distribution<double> unif11(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> size_dist(cfg.cluster_size.lo, cfg.cluster_size.hi);

  const auto r_count = static_cast<std::size_t>(cfg.r_clusters);
  std::vector<int> sizes(r_count), arm(r_count);
  std::vector<double> z(r_count), alpha(r_count);
  std::size_t n = 0;
  for (std::size_t r = 0; r < r_count; ++r) {
    sizes[r] = cfg.cluster_size.balanced() ? cfg.cluster_size.lo : size_dist(rng);
    z[r] = unif01(rng);
    arm[r] = unif01(rng) < treatment_probability(z[r]) ? 1 : 0;
    alpha[r] = normal(rng);
    n += static_cast<std::size_t>(sizes[r]);
  }
  const bool any1 = std::count(arm.begin(), arm.end(), 1) > 0;
  const bool any0 = std::count(arm.begin(), arm.end(), 0) > 0;

  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd x(rows, 6), zcol(rows, 1);
  Eigen::VectorXd eps(rows), alpha_unit(rows);
  std::vector<std::string> labels(n);
  std::vector<int> treatment(n);
  Eigen::Index i = 0;
  for (std::size_t r = 0; r < r_count; ++r) {
    const auto label = std::to_string(r);
    for (int k = 0; k < sizes[r]; ++k, ++i) {
      for (int j = 0; j < 6; ++j) x(i, j) = unif11(rng);
      eps(i) = normal(rng);
      zcol(i, 0) = z[r];
      alpha_unit(i) = alpha[r];
      labels[static_cast<std::size_t>(i)] = label;
      treatment[static_cast<std::size_t>(i)] = arm[r];
    }
  }
  if (!any0 || !any1) return std::nullopt;

  Eigen::MatrixXd xs(rows, 6);
  Eigen::VectorXd zs(rows);
  for (Eigen::Index u = 0; u < rows; ++u) {
    const double g1 = g_transform(x(u, 0));
    const double g2 = g_transform(x(u, 1));
    xs(u, 0) = g1 * g2;
    xs(u, 1) = g1 + g2;
    xs(u, 2) = 3.0 * std::max(x(u, 2), 0.0);
    xs(u, 3) = 3.0 * std::max(x(u, 3), 0.0);
    xs(u, 4) = 3.0 * std::max(x(u, 4), 0.0);
    xs(u, 5) = 2.0 * x(u, 5) - 1.0;
    zs(u) = g_transform(zcol(u, 0));
  }
  for (int j = 0; j < 6; ++j) standardize_in_place(xs.col(j));
  standardize_in_place(zs);

  const Eigen::Map<const Eigen::VectorXd> beta(cfg.beta.data(), 6);
  std::vector<double> y(n);
  for (Eigen::Index u = 0; u < rows; ++u)
    y[static_cast<std::size_t>(u)] =
        xs.row(u).dot(beta) + zs(u) + cfg.gamma * treatment[static_cast<std::size_t>(u)] + alpha_unit(u) + eps(u);

  GeneratedData out;
  out.ds = make_dataset(labels, treatment, y, x, zcol, TreatmentLevel::ClusterLevel,
                        {"x1", "x2", "x3", "x4", "x5", "x6"}, {"z1"});
  out.truth = cfg.gamma;
  out.transformed.resize(rows, 7);
  out.transformed << xs, zs;
  return out;
}

struct SchemeFit {
  MatchResult match;
  EstimateReport report;
};

SchemeFit fit_scheme(const Dataset& ds, MatchScheme scheme, const SimulationConfig& cfg) {
  MatchConfig mc;
  mc.m = cfg.m;
  mc.scheme = scheme;
  mc.ties = cfg.ties;
  SchemeFit f;
  f.match = match_units(ds, mc, cfg.estimand);
  auto [mu0, mu1] = fit_outcome_models(ds, scheme, cfg.basis);
  f.report = point_estimate(ds, f.match, &mu0, &mu1);
  return f;
}

ProcedureRun bootstrap_fit(const Dataset& ds, const SchemeFit& fit, Procedure p, const SimulationConfig& cfg,
                           std::uint64_t seed) {
  BootstrapConfig bc;
  bc.kind = bootstrap_of(p);
  bc.reps = cfg.bootstrap_reps;
  bc.seed = seed;
  bc.level = cfg.level;
  const auto cluster_of = ds.cluster_of();
  std::vector<double> weights;
  const auto sample = linearized_sample(ds, fit.report, cluster_of, weights);
  ProcedureRun run;
  run.report = fit.report;
  run.bootstrap = bootstrap_variance(sample, bc, fit.report.tau);
  run.report.variance = run.bootstrap.variance;
  run.report.ci = run.bootstrap.ci;
  return run;
}

}  // namespace

GeneratedData generate_dataset(const SimulationConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng = make_rng(seed, attempt);
    if (auto data = generate_attempt(cfg, rng)) {
      data->regenerations = attempt;
      return std::move(*data);
    }
  }
}

ProcedureRun run_procedure(const Dataset& ds, Procedure procedure, const SimulationConfig& cfg, std::uint64_t seed) {
  require_valid(ds);
  return bootstrap_fit(ds, fit_scheme(ds, scheme_of(procedure), cfg), procedure, cfg, seed);
}

double coverage(std::span<const std::pair<double, double>> intervals, double truth) {
  if (intervals.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& [lo, hi] : intervals) hit += lo <= truth && truth <= hi;
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

ProcedureSummary summarize(Procedure p, std::vector<double> estimates, std::vector<double> variances,
                           std::vector<std::pair<double, double>> intervals, double truth) {
  if (estimates.empty() || estimates.size() != variances.size() || estimates.size() != intervals.size())
    throw DomainError("summarize: inconsistent replication results");
  ProcedureSummary s;
  s.procedure = p;
  s.reps_used = estimates.size();
  double mean = 0.0, mean_var = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    mean += estimates[k];
    mean_var += variances[k];
  }
  const auto n = static_cast<double>(estimates.size());
  s.bias = mean / n - truth;
  s.avg_variance = mean_var / n;
  s.coverage = coverage(intervals, truth);
  s.empirical_variance = sample_variance(estimates);
  s.estimates = std::move(estimates);
  s.variances = std::move(variances);
  s.intervals = std::move(intervals);
  return s;
}

const ProcedureSummary& SimulationSummary::cell(Procedure p) const {
  for (const auto& c : cells)
    if (c.procedure == p) return c;
  throw DomainError(fmt::format("simulation summary has no results for {}", to_string(p)));
}

SimulationSummary monte_carlo(const SimulationConfig& cfg) {
  validate(cfg);
  const auto reps = static_cast<std::size_t>(cfg.reps);
  const auto n_proc = cfg.procedures.size();

  struct RepResult {
    std::vector<ProcedureRun> runs;
    std::size_t regenerations = 0;
  };
  std::vector<RepResult> results(reps);

  parallel_for(reps, cfg.threads, [&](std::size_t rep) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, rep);
    auto data = generate_dataset(cfg, rep_seed);
    std::map<MatchScheme, SchemeFit> fits;
    auto& out = results[rep];
    out.regenerations = data.regenerations;
    out.runs.reserve(n_proc);
    for (std::size_t k = 0; k < n_proc; ++k) {
      const Procedure p = cfg.procedures[k];
      const MatchScheme scheme = scheme_of(p);
      auto it = fits.find(scheme);
      if (it == fits.end()) it = fits.emplace(scheme, fit_scheme(data.ds, scheme, cfg)).first;
      const auto boot_seed = derive_seed(rep_seed, 1000 + static_cast<std::uint64_t>(p));
      out.runs.push_back(bootstrap_fit(data.ds, it->second, p, cfg, boot_seed));
    }
  });

  SimulationSummary summary;
  summary.config = cfg;
  for (const auto& r : results) summary.regenerations += r.regenerations;
  for (std::size_t k = 0; k < n_proc; ++k) {
    std::vector<double> est, var;
    std::vector<std::pair<double, double>> ci;
    for (const auto& r : results) {
      est.push_back(r.runs[k].report.tau);
      var.push_back(r.runs[k].report.variance);
      ci.push_back(r.runs[k].report.ci);
    }
    summary.cells.push_back(summarize(cfg.procedures[k], std::move(est), std::move(var), std::move(ci), cfg.gamma));
  }
  return summary;
}

void write_summary_csv(std::ostream& out, const SimulationSummary& summary) {
  out << "procedure,estimator,design,bias_x1000,var_x1000,coverage_pct\n";
  const auto estimator = to_string(summary.config.basis.kind);
  const auto design = summary.config.design_label();
  for (const auto& c : summary.cells)
    out << fmt::format("{},{},\"{}\",{:.1f},{:.1f},{:.1f}\n", to_string(c.procedure), estimator, design,
                       1000.0 * c.bias, 1000.0 * c.avg_variance, 100.0 * c.coverage);
}

}  // namespace clustermatch
