#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include <boost/math/special_functions/beta.hpp>

#include "clustermatch/error.hpp"
#include "clustermatch/pipeline.hpp"
#include "clustermatch/simulation.hpp"

using namespace clustermatch;

namespace {

SimulationConfig small_config() {
  SimulationConfig cfg;
  cfg.r_clusters = 12;
  cfg.cluster_size = ClusterSize::fixed(6);
  cfg.reps = 3;
  cfg.bootstrap_reps = 40;
  cfg.basis.degree = 1;
  cfg.seed = 77;
  return cfg;
}

// Composite Simpson rule on [0, 1].
template <class F>
double simpson(F f, int intervals) {
  const double h = 1.0 / intervals;
  double s = f(0.0) + f(1.0);
  for (int k = 1; k < intervals; ++k) s += (k % 2 ? 4.0 : 2.0) * f(k * h);
  return s * h / 3.0;
}

}  // namespace

TEST(GTransform, MidpointAndSaturation) {
  EXPECT_DOUBLE_EQ(g_transform(1.0 / 3.0), 1.5);
  EXPECT_NEAR(g_transform(-1.0), 1.0, 1e-11);
  EXPECT_NEAR(g_transform(10.0), 2.0, 1e-11);
}

TEST(TreatmentProbability, Examples) {
  EXPECT_DOUBLE_EQ(treatment_probability(0.0), 0.25);
  EXPECT_DOUBLE_EQ(treatment_probability(1.0), 0.5);
  EXPECT_DOUBLE_EQ(treatment_probability(0.5), 0.453125);
}

TEST(TreatmentProbability, MatchesIncompleteBeta) {
  for (double z = 0.0; z <= 1.0; z += 0.05)
    EXPECT_NEAR(treatment_probability(z), (1.0 + boost::math::ibeta(2.0, 4.0, z)) / 4.0, 1e-14);
}

TEST(TreatmentProbability, OutsideUnitIntervalRejected) {
  EXPECT_THROW(treatment_probability(-0.01), DomainError);
  EXPECT_THROW(treatment_probability(1.5), DomainError);
}

TEST(Validate, RejectsBadConfigs) {
  auto cfg = small_config();
  cfg.r_clusters = 1;
  EXPECT_THROW(validate(cfg), DomainError);
  cfg = small_config();
  cfg.cluster_size = ClusterSize::uniform(5, 4);
  EXPECT_THROW(validate(cfg), DomainError);
  cfg = small_config();
  cfg.cluster_size = ClusterSize::fixed(0);
  EXPECT_THROW(validate(cfg), DomainError);
}

TEST(Generate, TransformedColumnsAreStandardized) {
  auto cfg = small_config();
  cfg.r_clusters = 30;
  cfg.cluster_size = ClusterSize::fixed(8);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = generate_dataset(cfg, seed);
    const auto& t = data.transformed;
    ASSERT_EQ(t.rows(), 240);
    ASSERT_EQ(t.cols(), 7);
    for (Eigen::Index j = 0; j < 7; ++j) {
      const double mean = t.col(j).mean();
      const double var = (t.col(j).array() - mean).square().sum() / (t.rows() - 1.0);
      EXPECT_LE(std::abs(mean), 1e-10);
      EXPECT_NEAR(var, 1.0, 1e-10);
    }
  }
}

TEST(Generate, TransformedColumnsFollowTheListedFormulas) {
  const auto data = generate_dataset(small_config(), 3);
  const Eigen::MatrixXd x = data.ds.unit_covariate_matrix();
  const Eigen::MatrixXd z = data.ds.cluster_covariate_matrix();
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd raw(n, 7);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double g1 = g_transform(x(i, 0)), g2 = g_transform(x(i, 1));
    raw.row(i) << g1 * g2, g1 + g2, 3 * std::max(x(i, 2), 0.0), 3 * std::max(x(i, 3), 0.0),
        3 * std::max(x(i, 4), 0.0), 2 * x(i, 5) - 1, g_transform(z(i, 0));
  }
  for (Eigen::Index j = 0; j < 7; ++j) {
    const double mean = raw.col(j).mean();
    const double sd = std::sqrt((raw.col(j).array() - mean).square().sum() / (n - 1.0));
    for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(data.transformed(i, j), (raw(i, j) - mean) / sd, 1e-10);
  }
}

TEST(Generate, RawCovariatesWithinSupport) {
  const auto data = generate_dataset(small_config(), 4);
  const Eigen::MatrixXd x = data.ds.unit_covariate_matrix();
  EXPECT_LE(x.cwiseAbs().maxCoeff(), 1.0);
  const Eigen::MatrixXd z = data.ds.cluster_covariate_matrix();
  EXPECT_GE(z.minCoeff(), 0.0);
  EXPECT_LE(z.maxCoeff(), 1.0);
  EXPECT_EQ(data.truth, 2.0);
}

TEST(Generate, TreatmentConstantWithinClusters) {
  auto cfg = small_config();
  cfg.cluster_size = ClusterSize::uniform(1, 9);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto data = generate_dataset(cfg, seed);
    EXPECT_TRUE(validate(data.ds).ok());
    for (const auto& c : data.ds.clusters) {
      std::set<int> arms;
      for (auto u : c.member_units) arms.insert(data.ds.units[u].treatment);
      EXPECT_EQ(arms.size(), 1u);
    }
    EXPECT_GT(data.ds.n_treated(), 0u);
    EXPECT_GT(data.ds.n_control(), 0u);
  }
}

TEST(Generate, DeterministicPerSeed) {
  const auto a = generate_dataset(small_config(), 11);
  const auto b = generate_dataset(small_config(), 11);
  EXPECT_EQ(a.ds.outcomes(), b.ds.outcomes());
  EXPECT_EQ(a.ds.treatments(), b.ds.treatments());
  const auto c = generate_dataset(small_config(), 12);
  EXPECT_NE(a.ds.outcomes(), c.ds.outcomes());
}

TEST(Generate, TreatedFractionMatchesQuadratureOracle) {
  // E[pi(Z)] for Z ~ U(0,1), by quadrature of the incomplete beta function.
  const double oracle = (1.0 + simpson([](double z) { return boost::math::ibeta(2.0, 4.0, z); }, 2000)) / 4.0;
  EXPECT_NEAR(oracle, 5.0 / 12.0, 1e-9);

  auto cfg = small_config();
  cfg.r_clusters = 100;
  cfg.cluster_size = ClusterSize::fixed(1);
  std::size_t treated = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto data = generate_dataset(cfg, seed);
    treated += data.ds.n_treated();
    total += data.ds.n_clusters();
  }
  EXPECT_NEAR(static_cast<double>(treated) / static_cast<double>(total), oracle, 0.01);
}

TEST(Generate, UnbalancedSizesCoverRange) {
  auto cfg = small_config();
  cfg.r_clusters = 200;
  cfg.cluster_size = ClusterSize::uniform(20, 100);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = generate_dataset(cfg, seed);
    for (const auto& c : data.ds.clusters) {
      const auto n = c.member_units.size();
      EXPECT_GE(n, 20u);
      EXPECT_LE(n, 100u);
      sum += static_cast<double>(n);
      ++count;
    }
  }
  EXPECT_NEAR(sum / static_cast<double>(count), 60.0, 1.0);
}

TEST(Generate, NullEffectEstimatesCenterOnZero) {
  auto cfg = small_config();
  cfg.gamma = 0.0;
  cfg.beta = {0, 0, 0, 0, 0, 0};
  cfg.r_clusters = 20;
  cfg.cluster_size = ClusterSize::fixed(10);
  cfg.reps = 200;
  cfg.bootstrap_reps = 2;
  cfg.procedures = {Procedure::P1};
  const auto summary = monte_carlo(cfg);
  const auto& cell = summary.cell(Procedure::P1);
  const double se = std::sqrt(cell.empirical_variance / 200.0);
  EXPECT_LE(std::abs(cell.bias), 4.0 * se);
}

TEST(RunProcedure, SharedMatchingPathSharesPointEstimate) {
  const auto cfg = small_config();
  const auto data = generate_dataset(cfg, 5);
  const auto p1 = run_procedure(data.ds, Procedure::P1, cfg, 9);
  const auto p2 = run_procedure(data.ds, Procedure::P2, cfg, 9);
  const auto p3 = run_procedure(data.ds, Procedure::P3, cfg, 9);
  EXPECT_EQ(p1.report.tau, p2.report.tau);
  EXPECT_NE(p1.report.variance, p2.report.variance);
  EXPECT_NE(p1.report.tau, p3.report.tau);
}

TEST(Summary, CoverageCountsClosedIntervals) {
  const std::vector<std::pair<double, double>> ci{{1, 3}, {2.5, 3}, {0, 4}};
  EXPECT_DOUBLE_EQ(coverage(ci, 2.0), 2.0 / 3.0);
  const std::vector<std::pair<double, double>> edge{{2, 2}};
  EXPECT_DOUBLE_EQ(coverage(edge, 2.0), 1.0);
}

TEST(Summary, SingleRepBiasIsEstimateMinusTruth) {
  const auto s = summarize(Procedure::P1, {2.375}, {0.1}, {{2.0, 2.75}}, 2.0);
  EXPECT_EQ(s.bias, 2.375 - 2.0);
  EXPECT_EQ(s.avg_variance, 0.1);
  EXPECT_EQ(s.coverage, 1.0);
  EXPECT_EQ(s.reps_used, 1u);
}

TEST(MonteCarlo, DeterministicAcrossRunsAndThreads) {
  auto cfg = small_config();
  cfg.reps = 4;
  const auto a = monte_carlo(cfg);
  cfg.threads = 3;
  const auto b = monte_carlo(cfg);
  ASSERT_EQ(a.cells.size(), 4u);
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    EXPECT_EQ(a.cells[k].estimates, b.cells[k].estimates);
    EXPECT_EQ(a.cells[k].variances, b.cells[k].variances);
  }
  std::ostringstream sa, sb;
  write_summary_csv(sa, a);
  write_summary_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(MonteCarlo, SummaryCsvLayout) {
  auto cfg = small_config();
  cfg.reps = 2;
  cfg.procedures = {Procedure::P1, Procedure::P3};
  std::ostringstream out;
  write_summary_csv(out, monte_carlo(cfg));
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "procedure,estimator,design,bias_x1000,var_x1000,coverage_pct");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("P1,sieve,\"(12,6)\",", 0), 0u) << line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("P3,sieve,\"(12,6)\",", 0), 0u) << line;
  EXPECT_FALSE(std::getline(in, line));
}

TEST(Property, ClusterBootstrapVarianceExceedsUnitBootstrapOnClusteredData) {
  SimulationConfig cfg;
  cfg.bootstrap_reps = 200;
  int greater = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const auto data = generate_dataset(cfg, derive_seed(cfg.seed, rep));
    const auto p1 = run_procedure(data.ds, Procedure::P1, cfg, rep);
    const auto p2 = run_procedure(data.ds, Procedure::P2, cfg, rep);
    greater += p1.report.variance > p2.report.variance;
  }
  EXPECT_GE(greater, 95);
}

TEST(Property, UnitCovariatesUsuallyReduceVariance) {
  SimulationConfig cfg;
  cfg.cluster_size = ClusterSize::fixed(20);
  cfg.bootstrap_reps = 200;
  int smaller = 0;
  const int reps = 40;
  for (int rep = 0; rep < reps; ++rep) {
    const auto data = generate_dataset(cfg, derive_seed(cfg.seed + 1, static_cast<std::uint64_t>(rep)));
    const auto p1 = run_procedure(data.ds, Procedure::P1, cfg, 3);
    const auto p3 = run_procedure(data.ds, Procedure::P3, cfg, 3);
    smaller += p3.report.variance < p1.report.variance;
  }
  EXPECT_GT(smaller, reps / 2);
}
