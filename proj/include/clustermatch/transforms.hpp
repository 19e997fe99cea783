#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clustermatch/dataset.hpp"
#include "clustermatch/matching.hpp"

namespace clustermatch {

struct BoxCoxTransform {
  double lambda = 1.0;
  double shift = 0.0;
};

/// Profile log-likelihood of the Box-Cox model at `lambda` for positive data:
/// -n/2 log(sigma^2(lambda)) + (lambda - 1) sum log x, sigma^2 with divisor n.
double box_cox_log_likelihood(std::span<const double> positive_values, double lambda);

/// Chooses lambda on the grid -2.0, -1.9, ..., 2.0 by maximum profile
/// likelihood (first maximum wins). Non-positive data are shifted so that the
/// minimum becomes 1e-6.
BoxCoxTransform box_cox_fit(std::span<const double> values);

std::vector<double> box_cox_apply(const BoxCoxTransform& t, std::span<const double> values);

/// Fits and applies Box-Cox to the named covariate of `ds` in place. A
/// cluster covariate is fitted on one value per cluster. SchemaError when no
/// covariate has that name.
BoxCoxTransform box_cox_column(Dataset& ds, const std::string& name);

struct Standardized {
  std::vector<double> values;
  double mean = 0.0;
  double sd = 0.0;
};

/// Centres to mean 0 and scales to sample sd 1 (divisor n-1).
Standardized standardize(std::span<const double> values);

/// Standardized mean difference with the pooled sd sqrt((s_t^2 + s_c^2)/2).
/// Optional weights are frequency weights: means and variances equal those of
/// the sample with each observation repeated weight-many times.
double smd(std::span<const double> treated, std::span<const double> control,
           std::span<const double> treated_weights = {}, std::span<const double> control_weights = {});

struct BalanceRow {
  std::string covariate;
  double smd_unadjusted = 0.0;
  std::optional<double> smd_adjusted;
};

struct BalanceTable {
  std::vector<BalanceRow> rows;
  bool has_adjusted() const { return !rows.empty() && rows.front().smd_adjusted.has_value(); }
};

/// One row per unit covariate then per cluster covariate (cluster values are
/// expanded to their units). With a match, the adjusted column reweights units
/// by the imputation multiplicity: 1 + K/M under ATE; 1 for treated and K/M
/// for controls under ATT. The adjusted SMD keeps the unadjusted pooled sd.
BalanceTable balance_table(const Dataset& ds, const MatchResult* match = nullptr);

void write_balance_csv(std::ostream& out, const BalanceTable& table);

}  // namespace clustermatch
