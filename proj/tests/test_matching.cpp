#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "clustermatch/error.hpp"
#include "clustermatch/matching.hpp"
#include "support.hpp"

using namespace clustermatch;

namespace {

// Dense inverse by Gauss-Jordan elimination with partial pivoting.
Eigen::MatrixXd gauss_jordan_inverse(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index pivot = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(pivot, c))) pivot = r;
    a.row(c).swap(a.row(pivot));
    inv.row(c).swap(inv.row(pivot));
    const double p = a(c, c);
    a.row(c) /= p;
    inv.row(c) /= p;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      a.row(r) -= f * a.row(c);
      inv.row(r) -= f * inv.row(c);
    }
  }
  return inv;
}

Eigen::MatrixXd covariance_loop(const Eigen::MatrixXd& s) {
  const Eigen::Index n = s.rows(), d = s.cols();
  Eigen::MatrixXd cov(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index k = 0; k < d; ++k) {
      double mj = 0.0, mk = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        mj += s(i, j);
        mk += s(i, k);
      }
      mj /= static_cast<double>(n);
      mk /= static_cast<double>(n);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) acc += (s(i, j) - mj) * (s(i, k) - mk);
      cov(j, k) = acc / static_cast<double>(n - 1);
    }
  return cov;
}

MatchConfig config(int m, MatchScheme scheme, TieHandling ties = TieHandling::LowestId) {
  MatchConfig c;
  c.m = m;
  c.scheme = scheme;
  c.ties = ties;
  return c;
}

}  // namespace

TEST(PooledInverseCovariance, OrthogonalUnitColumnsGiveIdentity) {
  const double a = std::sqrt(0.75);
  Eigen::MatrixXd s(4, 2);
  s << a, a, a, -a, -a, a, -a, -a;
  EXPECT_TRUE(pooled_inverse_covariance(s, 0.0).isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-10));
}

TEST(PooledInverseCovariance, DuplicatedColumnIsSingular) {
  Eigen::MatrixXd s(5, 2);
  s.col(0) << 1, 2, 4, 7, 11;
  s.col(1) = s.col(0);
  EXPECT_THROW(pooled_inverse_covariance(s, 0.0), SingularError);
}

TEST(PooledInverseCovariance, RidgeMatchesGaussJordanOracle) {
  Eigen::MatrixXd s(6, 3);
  s.col(0) << 1, 2, 4, 7, 11, 3;
  s.col(1) = s.col(0);
  s.col(2) << 0.5, -1, 2, 0, 1, 1.5;
  Eigen::MatrixXd cov = covariance_loop(s);
  cov.diagonal().array() += 1e-6;
  const Eigen::MatrixXd oracle = gauss_jordan_inverse(cov);
  const Eigen::MatrixXd inv = pooled_inverse_covariance(s, 1e-6);
  EXPECT_TRUE(inv.allFinite());
  EXPECT_LE((inv - oracle).norm() / oracle.norm(), 1e-8);
}

TEST(Mahalanobis, Examples) {
  const std::vector<double> origin{0.0, 0.0}, p{3.0, 4.0};
  EXPECT_DOUBLE_EQ(mahalanobis(origin, p, Eigen::MatrixXd::Identity(2, 2)), 5.0);
  EXPECT_DOUBLE_EQ(mahalanobis(p, p, Eigen::MatrixXd::Identity(2, 2)), 0.0);
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
  diag(0, 0) = 0.25;
  diag(1, 1) = 1.0;
  const std::vector<double> q{2.0, 1.0};
  EXPECT_DOUBLE_EQ(mahalanobis(q, origin, diag), std::sqrt(2.0));
  const std::vector<double> short_vec{1.0};
  EXPECT_THROW(mahalanobis(short_vec, origin, diag), DomainError);
}

TEST(MatchUnits, ForcedUniqueMatch) {
  const auto ds = cmtest::scalar_dataset({0.0, 1.0}, {1, 0}, {3.0, 1.0});
  const auto r = match_units(ds, config(1, MatchScheme::ClusterOnly), Estimand::ATE);
  EXPECT_EQ(r.k_counts, (std::vector<int>{1, 1}));
  EXPECT_DOUBLE_EQ(r.y0_hat[0], 1.0);
  EXPECT_DOUBLE_EQ(r.y1_hat[1], 3.0);
}

TEST(MatchUnits, ThreeUnitAte) {
  const auto r = match_units(cmtest::three_unit_example(), config(1, MatchScheme::ClusterOnly), Estimand::ATE);
  EXPECT_EQ(r.matched_sets[2], (std::vector<std::size_t>{0}));
  EXPECT_EQ(r.k_counts, (std::vector<int>{1, 0, 2}));
}

TEST(MatchUnits, ThreeUnitAtt) {
  const auto r = match_units(cmtest::three_unit_example(), config(1, MatchScheme::ClusterOnly), Estimand::ATT);
  EXPECT_EQ(r.k_counts, (std::vector<int>{0, 0, 2}));
  EXPECT_TRUE(r.matched_sets[2].empty());
}

TEST(MatchUnits, InsufficientOppositeArmStatesRequiredM) {
  try {
    match_units(cmtest::three_unit_example(), config(2, MatchScheme::ClusterOnly), Estimand::ATE);
    FAIL() << "expected an error";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("m = 2"), std::string::npos);
  }
}

TEST(MatchUnits, AverageTiesSplitWeightAcrossTiedUnits) {
  // Control at 0 is equidistant from treated at -1 and 1.
  const auto ds = cmtest::scalar_dataset({-1.0, 1.0, 0.0, 5.0}, {1, 1, 0, 0}, {2.0, 4.0, 0.0, 9.0});
  const auto r = match_units(ds, config(1, MatchScheme::ClusterOnly, TieHandling::Average), Estimand::ATE);
  EXPECT_EQ(r.matched_sets[2], (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(r.y1_hat[2], 3.0);
  EXPECT_DOUBLE_EQ(r.k_weight[0], 0.5);
  EXPECT_DOUBLE_EQ(r.k_weight[1], 1.5);  // also matched by the control at 5
  EXPECT_DOUBLE_EQ(std::accumulate(r.k_weight.begin(), r.k_weight.end(), 0.0), 4.0);
}

TEST(MatchUnits, CsvListsMatchedSets) {
  const auto ds = cmtest::three_unit_example();
  const auto r = match_units(ds, config(1, MatchScheme::ClusterOnly), Estimand::ATE);
  std::ostringstream out;
  write_match_csv(out, ds, r);
  EXPECT_EQ(out.str(),
            "unit_id,treatment,k,k_weight,matched,y0_hat,y1_hat\n"
            "0,1,1,1,2,1,2\n"
            "1,1,0,0,2,1,4\n"
            "2,0,2,2,0,1,2\n");
}

TEST(Property, CountingIdentitiesAndArmStructure) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const auto ds = cmtest::random_dataset(rng);
    for (auto ties : {TieHandling::LowestId, TieHandling::Average})
      for (int m = 1; m <= 3; ++m) {
        const auto ate = match_units(ds, config(m, MatchScheme::ClusterAndUnit, ties), Estimand::ATE);
        const auto att = match_units(ds, config(m, MatchScheme::ClusterAndUnit, ties), Estimand::ATT);
        double sum_ate = 0.0, sum_att = 0.0;
        for (std::size_t i = 0; i < ds.n_units(); ++i) {
          const int a = ds.units[i].treatment;
          sum_ate += ate.k_weight[i];
          if (a == 0) sum_att += att.k_weight[i];
          else EXPECT_EQ(att.k_weight[i], 0.0);
          const auto& set = ate.matched_sets[i];
          if (ties == TieHandling::LowestId) EXPECT_EQ(set.size(), static_cast<std::size_t>(m));
          EXPECT_EQ(std::set<std::size_t>(set.begin(), set.end()).size(), set.size());
          for (auto j : set) EXPECT_NE(ds.units[j].treatment, a);
          EXPECT_EQ(a == 1 ? ate.y1_hat[i] : ate.y0_hat[i], ds.units[i].outcome);
        }
        EXPECT_NEAR(sum_ate, static_cast<double>(ds.n_units() * m), 1e-9);
        EXPECT_NEAR(sum_att, static_cast<double>(ds.n_treated() * m), 1e-9);
        if (ties == TieHandling::LowestId) {
          EXPECT_EQ(std::accumulate(ate.k_counts.begin(), ate.k_counts.end(), 0), static_cast<int>(ds.n_units()) * m);
        }
      }
  }
}

TEST(Property, ClusterOnlyGivesEqualDistanceMultisetsWithinCluster) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ds = cmtest::random_dataset(rng);
    const auto r = match_units(ds, config(3, MatchScheme::ClusterOnly), Estimand::ATE);
    const Eigen::MatrixXd s = matching_matrix(ds, MatchScheme::ClusterOnly);
    const Eigen::MatrixXd inv = pooled_inverse_covariance(s, 0.0);
    auto distances = [&](std::size_t i) {
      std::multiset<double> d;
      for (auto j : r.matched_sets[i])
        d.insert(mahalanobis(std::vector<double>{s(i, 0)}, std::vector<double>{s(j, 0)}, inv));
      return d;
    };
    for (const auto& c : ds.clusters)
      for (auto i : c.member_units) EXPECT_EQ(distances(i), distances(c.member_units.front()));
  }
}

TEST(Property, PermutingUnitsRelabelsMatches) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ds = cmtest::random_dataset(rng);
    const std::size_t n = ds.n_units();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> labels;
    std::vector<int> a;
    std::vector<double> y;
    const Eigen::MatrixXd x = ds.unit_covariate_matrix(), z = ds.cluster_covariate_matrix();
    Eigen::MatrixXd px(n, x.cols()), pz(n, z.cols());
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = perm[k];
      labels.push_back(ds.clusters[ds.units[i].cluster_id].label);
      a.push_back(ds.units[i].treatment);
      y.push_back(ds.units[i].outcome);
      px.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(i));
      pz.row(static_cast<Eigen::Index>(k)) = z.row(static_cast<Eigen::Index>(i));
    }
    const auto pds = make_dataset(labels, a, y, px, pz, TreatmentLevel::ClusterLevel);
    const auto r = match_units(ds, config(2, MatchScheme::ClusterAndUnit), Estimand::ATE);
    const auto pr = match_units(pds, config(2, MatchScheme::ClusterAndUnit), Estimand::ATE);
    for (std::size_t k = 0; k < n; ++k) {
      std::set<std::size_t> relabeled;
      for (auto j : pr.matched_sets[k]) relabeled.insert(perm[j]);
      const auto& orig = r.matched_sets[perm[k]];
      EXPECT_EQ(relabeled, std::set<std::size_t>(orig.begin(), orig.end()));
    }
  }
}

TEST(Property, SmallerMIsSubsetOfLargerM) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ds = cmtest::random_dataset(rng);
    const auto one = match_units(ds, config(1, MatchScheme::ClusterAndUnit), Estimand::ATE);
    const auto two = match_units(ds, config(2, MatchScheme::ClusterAndUnit), Estimand::ATE);
    for (std::size_t i = 0; i < ds.n_units(); ++i)
      EXPECT_NE(std::find(two.matched_sets[i].begin(), two.matched_sets[i].end(), one.matched_sets[i][0]),
                two.matched_sets[i].end());
  }
}

TEST(Property, ResultIndependentOfThreadCount) {
  std::mt19937_64 rng(25);
  const auto ds = cmtest::random_dataset(rng);
  for (auto ties : {TieHandling::LowestId, TieHandling::Average}) {
    auto cfg = config(3, MatchScheme::ClusterOnly, ties);
    const auto serial = match_units(ds, cfg, Estimand::ATE);
    cfg.threads = 4;
    const auto parallel = match_units(ds, cfg, Estimand::ATE);
    EXPECT_EQ(serial.matched_sets, parallel.matched_sets);
    EXPECT_EQ(serial.k_weight, parallel.k_weight);
  }
}
