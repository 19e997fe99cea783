#include "clustermatch/pipeline.hpp"

#include "clustermatch/error.hpp"

namespace clustermatch {

std::pair<OutcomeModel, OutcomeModel> fit_outcome_models(const Dataset& ds, MatchScheme scheme, const BasisSpec& spec) {
  const Eigen::MatrixXd s = matching_matrix(ds, scheme);
  std::vector<Eigen::Index> rows[2];
  std::vector<double> ys[2];
  for (std::size_t i = 0; i < ds.n_units(); ++i) {
    const int a = ds.units[i].treatment;
    rows[a].push_back(static_cast<Eigen::Index>(i));
    ys[a].push_back(ds.units[i].outcome);
  }
  auto fit = [&](int a) {
    if (rows[a].empty()) throw DomainError("fit_outcome_models: empty treatment arm");
    return fit_arm(s(rows[a], Eigen::all), ys[a], spec, a);
  };
  return {fit(0), fit(1)};
}

EstimateReport point_estimate(const Dataset& ds, const MatchResult& match, const OutcomeModel* mu0,
                              const OutcomeModel* mu1) {
  const MeanFunction zero = [](std::span<const double>) { return 0.0; };
  if (match.estimand == Estimand::ATE) {
    if (mu0 && mu1) return bias_corrected_ate(ds, match, *mu0, *mu1);
    return bias_corrected_ate(ds, match, zero, zero);
  }
  if (mu0 && mu1) return bias_corrected_att(ds, match, *mu0, *mu1);
  return bias_corrected_att(ds, match, zero, zero);
}

LinearizedSample linearized_sample(const Dataset& ds, const EstimateReport& report,
                                   const std::vector<std::size_t>& cluster_of, std::vector<double>& weights) {
  weights.resize(ds.n_units());
  for (std::size_t i = 0; i < ds.n_units(); ++i)
    weights[i] = report.estimand == Estimand::ATE ? 1.0 : static_cast<double>(ds.units[i].treatment);
  return LinearizedSample{report.psi, cluster_of, weights, ds.n_clusters()};
}

Estimation estimate(const Dataset& ds, const EstimationConfig& cfg) {
  require_valid(ds);
  Estimation e;
  e.match = match_units(ds, cfg.match, cfg.estimand);
  if (cfg.basis) {
    auto [m0, m1] = fit_outcome_models(ds, cfg.match.scheme, *cfg.basis);
    e.mu0 = std::move(m0);
    e.mu1 = std::move(m1);
  }
  e.report = point_estimate(ds, e.match, e.mu0 ? &*e.mu0 : nullptr, e.mu1 ? &*e.mu1 : nullptr);

  const auto cluster_of = ds.cluster_of();
  std::vector<double> weights;
  const auto sample = linearized_sample(ds, e.report, cluster_of, weights);
  e.bootstrap = bootstrap_variance(sample, cfg.bootstrap, e.report.tau);
  e.report.variance = e.bootstrap.variance;
  e.report.ci = e.bootstrap.ci;

  const MeanFunction zero = [](std::span<const double>) { return 0.0; };
  const auto sigma2 = squared_residuals(ds, cfg.match.scheme, e.mu0 ? e.mu0->as_function() : zero,
                                        e.mu1 ? e.mu1->as_function() : zero);
  e.plugin = plugin_variance_components(ds, e.match, sigma2, e.report);
  return e;
}

}  // namespace clustermatch
