#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clustermatch/dataset.hpp"
#include "clustermatch/matching.hpp"
#include "clustermatch/outcome_model.hpp"

namespace clustermatch {

/// tau_bar + e_m + b_m reproduces the simple matching estimator exactly for
/// any pair of mean functions.
struct Decomposition {
  double tau_bar = 0.0;
  double e_m = 0.0;
  double b_m = 0.0;
  double total() const { return tau_bar + e_m + b_m; }
};

struct EstimateReport {
  Estimand estimand = Estimand::ATE;
  double tau_mat = 0.0;
  double b_hat = 0.0;
  double tau = 0.0;
  /// Linearized per-unit values: mean(psi) = tau (ATE), sum(psi)/N1 = tau (ATT).
  std::vector<double> psi;
  /// mu1_hat(S_i) - mu0_hat(S_i) per unit.
  std::vector<double> contrast;
  double variance = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
};

double tau_mat_ate(const Dataset& ds, const MatchResult& match);
/// (1/N) sum (Y1_hat - Y0_hat); equal to tau_mat_ate up to rounding.
double tau_mat_ate_imputed(const Dataset& ds, const MatchResult& match);

double tau_mat_att(const Dataset& ds, const MatchResult& match);
/// (1/N1) sum over treated of (Y - Y0_hat).
double tau_mat_att_imputed(const Dataset& ds, const MatchResult& match);

/// Estimated conditional bias. Mean functions are evaluated on the matching
/// vector of match.scheme.
double bias_term_ate(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0, const MeanFunction& mu1);
double bias_term_ate(const Dataset& ds, const MatchResult& match, const OutcomeModel& mu0, const OutcomeModel& mu1);
double bias_term_att(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0);
double bias_term_att(const Dataset& ds, const MatchResult& match, const OutcomeModel& mu0);

/// Bias-corrected estimate with linearized values; variance and ci are left
/// for the bootstrap.
EstimateReport bias_corrected_ate(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0,
                                  const MeanFunction& mu1);
EstimateReport bias_corrected_ate(const Dataset& ds, const MatchResult& match, const OutcomeModel& mu0,
                                  const OutcomeModel& mu1);
EstimateReport bias_corrected_att(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0,
                                  const MeanFunction& mu1);
EstimateReport bias_corrected_att(const Dataset& ds, const MatchResult& match, const OutcomeModel& mu0,
                                  const OutcomeModel& mu1);

Decomposition decompose(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0, const MeanFunction& mu1,
                        Estimand estimand);

struct VarianceComponents {
  double sigma1_sq = 0.0;  // residual part
  double sigma2_sq = 0.0;  // treatment-effect heterogeneity part
};

/// Plug-in diagnostics. `sigma2` holds per-unit conditional variance
/// estimates; the contrast and point estimate come from `report`. The
/// heterogeneity part is the spread of the contrast about its own mean, over
/// all units (ATE) or the treated (ATT).
VarianceComponents plugin_variance_components(const Dataset& ds, const MatchResult& match,
                                              std::span<const double> sigma2, const EstimateReport& report);

/// (Y_i - mu_hat_{A_i}(S_i))^2, the per-unit conditional variance plug-in.
std::vector<double> squared_residuals(const Dataset& ds, MatchScheme scheme, const MeanFunction& mu0,
                                      const MeanFunction& mu1);

}  // namespace clustermatch
