#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clustermatch/bootstrap.hpp"
#include "clustermatch/dataset.hpp"
#include "clustermatch/estimators.hpp"
#include "clustermatch/matching.hpp"
#include "clustermatch/outcome_model.hpp"

namespace clustermatch {

/// P1: match on Z, cluster-weighted bootstrap. P2: match on Z, unit-weighted.
/// P3: match on (X, Z), cluster-weighted. P4: match on (X, Z), unit-weighted.
enum class Procedure { P1, P2, P3, P4 };

std::string_view to_string(Procedure p);
MatchScheme scheme_of(Procedure p);
BootstrapKind bootstrap_of(Procedure p);

/// Cluster sizes drawn uniformly from {lo, ..., hi}; lo == hi is a balanced design.
struct ClusterSize {
  int lo = 50;
  int hi = 50;
  static ClusterSize fixed(int n) { return {n, n}; }
  static ClusterSize uniform(int lo, int hi) { return {lo, hi}; }
  bool balanced() const { return lo == hi; }
};

struct SimulationConfig {
  int r_clusters = 50;
  ClusterSize cluster_size;
  std::array<double, 6> beta{1, 1, 1, 1, 1, 1};
  double gamma = 2.0;
  int reps = 200;
  int bootstrap_reps = 500;
  std::uint64_t seed = 20240101;
  std::vector<Procedure> procedures{Procedure::P1, Procedure::P2, Procedure::P3, Procedure::P4};
  Estimand estimand = Estimand::ATE;
  BasisSpec basis;
  int m = 3;
  TieHandling ties = TieHandling::Average;
  double level = 0.95;
  unsigned threads = 1;

  /// "(50,50)" or "(50,[20,100])".
  std::string design_label() const;
};

void validate(const SimulationConfig& cfg);

/// 1 + 1 / (1 + exp(-20 (x - 1/3))).
double g_transform(double x);

/// (1 + F(z)) / 4 with F the Beta(2,4) distribution function.
double treatment_probability(double z);

struct GeneratedData {
  Dataset ds;
  double truth = 0.0;
  /// N x 7 outcome-model covariates: standardized X*_1..X*_6 then Z*.
  Eigen::MatrixXd transformed;
  /// Attempts discarded because one arm was empty.
  std::size_t regenerations = 0;
};

/// One simulated dataset. The dataset holds the raw covariates X (6 columns)
/// and Z (1 column); outcomes use the standardized transforms. Attempt k uses
/// the RNG substream derive_seed(seed, k).
GeneratedData generate_dataset(const SimulationConfig& cfg, std::uint64_t seed);

struct ProcedureRun {
  EstimateReport report;
  BootstrapResult bootstrap;
};

/// One procedure on one dataset: match with cfg.m, bias-correct with cfg.basis
/// and bootstrap with cfg.bootstrap_reps replicates seeded by `seed`.
ProcedureRun run_procedure(const Dataset& ds, Procedure procedure, const SimulationConfig& cfg, std::uint64_t seed);

struct ProcedureSummary {
  Procedure procedure = Procedure::P1;
  double bias = 0.0;
  double avg_variance = 0.0;
  double coverage = 0.0;
  /// Variance of the point estimates across replications (divisor reps-1).
  double empirical_variance = 0.0;
  std::size_t reps_used = 0;
  std::vector<double> estimates;
  std::vector<double> variances;
  std::vector<std::pair<double, double>> intervals;
};

struct SimulationSummary {
  SimulationConfig config;
  std::vector<ProcedureSummary> cells;
  std::size_t regenerations = 0;

  const ProcedureSummary& cell(Procedure p) const;
};

/// Fraction of intervals containing `truth` (closed intervals).
double coverage(std::span<const std::pair<double, double>> intervals, double truth);

/// Aggregates per-replication results for one procedure.
ProcedureSummary summarize(Procedure p, std::vector<double> estimates, std::vector<double> variances,
                           std::vector<std::pair<double, double>> intervals, double truth);

/// Full Monte Carlo study. Deterministic given cfg.seed, independent of cfg.threads.
SimulationSummary monte_carlo(const SimulationConfig& cfg);

/// procedure,estimator,design,bias_x1000,var_x1000,coverage_pct
void write_summary_csv(std::ostream& out, const SimulationSummary& summary);

}  // namespace clustermatch
