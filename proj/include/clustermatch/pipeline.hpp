#pragma once

#include <optional>

#include "clustermatch/bootstrap.hpp"
#include "clustermatch/dataset.hpp"
#include "clustermatch/estimators.hpp"
#include "clustermatch/matching.hpp"
#include "clustermatch/outcome_model.hpp"

namespace clustermatch {

struct EstimationConfig {
  Estimand estimand = Estimand::ATE;
  MatchConfig match;
  /// nullopt disables bias correction (mu_hat = 0).
  std::optional<BasisSpec> basis = BasisSpec{};
  BootstrapConfig bootstrap;
};

struct Estimation {
  MatchResult match;
  std::optional<OutcomeModel> mu0;
  std::optional<OutcomeModel> mu1;
  EstimateReport report;
  BootstrapResult bootstrap;
  VarianceComponents plugin;
};

/// Per-arm outcome models on the matching vector of `scheme`.
std::pair<OutcomeModel, OutcomeModel> fit_outcome_models(const Dataset& ds, MatchScheme scheme, const BasisSpec& spec);

/// Point estimate and linearized values for an existing match.
EstimateReport point_estimate(const Dataset& ds, const MatchResult& match, const OutcomeModel* mu0,
                              const OutcomeModel* mu1);

LinearizedSample linearized_sample(const Dataset& ds, const EstimateReport& report,
                                   const std::vector<std::size_t>& cluster_of, std::vector<double>& weights);

/// match -> outcome models -> bias-corrected estimate -> bootstrap variance.
Estimation estimate(const Dataset& ds, const EstimationConfig& cfg);

}  // namespace clustermatch
