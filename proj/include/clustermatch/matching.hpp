#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "clustermatch/dataset.hpp"

namespace clustermatch {

enum class Estimand { ATE, ATT };

/// Which covariates form the matching vector S.
enum class MatchScheme {
  ClusterOnly,     // S = Z
  ClusterAndUnit,  // S = (X, Z)
};

std::string_view to_string(Estimand e);
std::string_view to_string(MatchScheme s);

/// Treatment of opposite-arm units tied with the m-th nearest distance.
enum class TieHandling {
  /// Exactly m matches; ties go to the lower unit id.
  LowestId,
  /// Every unit at or within the m-th nearest distance is matched and the
  /// imputation averages them with equal weight.
  Average,
};

std::string_view to_string(TieHandling t);

struct MatchConfig {
  int m = 3;
  MatchScheme scheme = MatchScheme::ClusterAndUnit;
  double ridge = 0.0;
  TieHandling ties = TieHandling::LowestId;
  unsigned threads = 1;
};

struct MatchResult {
  Estimand estimand = Estimand::ATE;
  MatchScheme scheme = MatchScheme::ClusterAndUnit;
  int m = 1;
  TieHandling ties = TieHandling::LowestId;
  /// matched_sets[i] holds the opposite-arm units nearest to source unit i,
  /// nearest first: exactly m of them, or more when ties are averaged. Empty
  /// for units that are not sources (controls under ATT).
  std::vector<std::vector<std::size_t>> matched_sets;
  /// Number of matched sets unit i appears in.
  std::vector<int> k_counts;
  /// K_M(i): m times the total imputation weight unit i receives. Equals
  /// k_counts under LowestId; fractional when ties are averaged. Sums to N*m
  /// (ATE) or N1*m (ATT).
  std::vector<double> k_weight;

  /// Imputed potential outcomes. NaN where the unit is not a source and the
  /// value would need imputation.
  std::vector<double> y0_hat;
  std::vector<double> y1_hat;

  std::size_t size() const { return k_counts.size(); }
  /// Imputation weight of each member of matched_sets[i] (1/|J(i)|).
  double member_weight(std::size_t i) const { return 1.0 / static_cast<double>(matched_sets[i].size()); }
};

/// N x d matching matrix for the scheme: Z, or X followed by Z.
Eigen::MatrixXd matching_matrix(const Dataset& ds, MatchScheme scheme);

/// Inverse of (sample covariance of the rows, denominator N-1) + ridge * I.
/// Throws SingularError when the regularized covariance is not numerically
/// positive definite.
Eigen::MatrixXd pooled_inverse_covariance(const Eigen::MatrixXd& s, double ridge);

double mahalanobis(std::span<const double> x, std::span<const double> y, const Eigen::MatrixXd& inv_cov);

/// M-nearest-neighbour matching with replacement across arms. Under ATE every
/// unit is a source; under ATT only treated units are. Ties are resolved by
/// cfg.ties, so the result does not depend on cfg.threads.
MatchResult match_units(const Dataset& ds, const MatchConfig& cfg, Estimand estimand);

/// Same, with the matching matrix supplied by the caller (one row per unit).
MatchResult match_units(const Dataset& ds, const Eigen::MatrixXd& s, const MatchConfig& cfg, Estimand estimand);

/// unit_id,treatment,k,k_weight,matched,y0_hat,y1_hat with matched ids separated by ';'.
void write_match_csv(std::ostream& out, const Dataset& ds, const MatchResult& match);

}  // namespace clustermatch
