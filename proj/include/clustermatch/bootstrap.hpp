#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "clustermatch/random.hpp"

namespace clustermatch {

enum class BootstrapKind {
  ClusterWeighted,  // resample whole clusters
  UnitWeighted,     // multinomial weights on individual units
};

/// How a replicate is formed from the resampling counts.
enum class ReplicateForm {
  /// tau*_b = sum_i c_i psi_i / sum_i c_i u_i; variance is directly on the
  /// estimator's scale.
  Ratio,
  /// tau*_b = sum_i (c_i / sqrt(norm)) (psi_i - u_i tau); the reported
  /// variance is var(tau*) / norm so it is on the same scale as Ratio.
  ScaledCentered,
};

std::string_view to_string(BootstrapKind k);

struct BootstrapConfig {
  BootstrapKind kind = BootstrapKind::ClusterWeighted;
  int reps = 1000;
  std::uint64_t seed = 1;
  double level = 0.95;
  ReplicateForm form = ReplicateForm::Ratio;
  unsigned threads = 1;
};

struct BootstrapResult {
  double variance = 0.0;
  std::vector<double> replicates;
  std::pair<double, double> ci{0.0, 0.0};
  /// Replicates redrawn because their denominator was zero.
  std::size_t redraws = 0;
};

/// Tallies of R uniform draws from {0..R-1}: Multinomial(R, 1/R).
std::vector<int> draw_cluster_counts(std::size_t n_clusters, Rng& rng);
/// Multinomial(N, 1/N) unit multiplicities.
std::vector<int> draw_unit_counts(std::size_t n_units, Rng& rng);

/// Linearized values plus their grouping. `denominator_weight` is 1 per unit
/// for ATE and the treatment indicator for ATT, so sum(psi)/sum(u) is the
/// point estimate.
struct LinearizedSample {
  std::span<const double> psi;
  std::span<const std::size_t> cluster_of;
  std::span<const double> denominator_weight;
  std::size_t n_clusters = 0;
};

/// Replicate statistic for given cluster counts (Ratio form). Returns NaN
/// when the resampled denominator is zero.
double cluster_replicate(const LinearizedSample& sample, std::span<const int> cluster_counts);
/// Replicate statistic for given unit counts (Ratio form).
double unit_replicate(const LinearizedSample& sample, std::span<const int> unit_counts);

/// Cluster-weighted bootstrap of the linearized estimator. Replicate b uses
/// its own RNG stream derived from (cfg.seed, b). Throws when there is only
/// one cluster.
BootstrapResult cluster_weighted_variance(const LinearizedSample& sample, const BootstrapConfig& cfg, double point);

/// Standard weighted bootstrap treating units as independent.
BootstrapResult unit_weighted_variance(const LinearizedSample& sample, const BootstrapConfig& cfg, double point);

BootstrapResult bootstrap_variance(const LinearizedSample& sample, const BootstrapConfig& cfg, double point);

/// point -/+ z sqrt(variance), z the standard normal quantile at (1+level)/2.
std::pair<double, double> confidence_interval(double point, double variance, double level);

/// Sample variance with divisor n-1 (0 for fewer than two values).
double sample_variance(std::span<const double> values);

void write_replicates_csv(std::ostream& out, const BootstrapResult& result);

}  // namespace clustermatch
