#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clustermatch/dataset.hpp"
#include "clustermatch/outcome_model.hpp"

namespace cmtest {

using clustermatch::Dataset;
using clustermatch::MeanFunction;

inline bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

/// One singleton cluster per unit, the scalar s stored as the cluster covariate.
inline Dataset scalar_dataset(const std::vector<double>& s, const std::vector<int>& a, const std::vector<double>& y) {
  const auto n = static_cast<Eigen::Index>(s.size());
  std::vector<std::string> labels;
  Eigen::MatrixXd z(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    labels.push_back("c" + std::to_string(i));
    z(i, 0) = s[static_cast<std::size_t>(i)];
  }
  return clustermatch::make_dataset(labels, a, y, Eigen::MatrixXd(n, 0), z,
                                    clustermatch::TreatmentLevel::ClusterLevel);
}

/// Treated at s = 0.10 (y = 2) and s = 0.20 (y = 4); control at s = 0.14 (y = 1).
inline Dataset three_unit_example() { return scalar_dataset({0.10, 0.20, 0.14}, {1, 1, 0}, {2.0, 4.0, 1.0}); }

/// Small clustered dataset with 2 unit covariates and 1 cluster covariate,
/// cluster-level treatment and at least `min_arm` units in each arm. N <= 60.
inline Dataset random_dataset(std::mt19937_64& rng, int min_arm = 3) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> n_clusters(4, 12);
  std::uniform_int_distribution<int> size(1, 5);
  std::bernoulli_distribution coin(0.5);
  for (;;) {
    const int r = n_clusters(rng);
    std::vector<std::string> labels;
    std::vector<int> a;
    std::vector<double> y;
    std::vector<double> x1, x2, z;
    for (int c = 0; c < r; ++c) {
      const int arm = coin(rng) ? 1 : 0;
      const double zc = normal(rng);
      const int n = size(rng);
      for (int k = 0; k < n; ++k) {
        labels.push_back("r" + std::to_string(c));
        a.push_back(arm);
        x1.push_back(normal(rng));
        x2.push_back(normal(rng));
        z.push_back(zc);
        y.push_back(1.5 * arm + x1.back() - 0.5 * x2.back() + zc + normal(rng));
      }
    }
    const auto n1 = std::count(a.begin(), a.end(), 1);
    const auto n0 = static_cast<std::ptrdiff_t>(a.size()) - n1;
    if (n1 < min_arm || n0 < min_arm) continue;
    const auto n = static_cast<Eigen::Index>(a.size());
    Eigen::MatrixXd xm(n, 2), zm(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      xm(i, 0) = x1[static_cast<std::size_t>(i)];
      xm(i, 1) = x2[static_cast<std::size_t>(i)];
      zm(i, 0) = z[static_cast<std::size_t>(i)];
    }
    return clustermatch::make_dataset(labels, a, y, xm, zm, clustermatch::TreatmentLevel::ClusterLevel);
  }
}

/// A random smooth nonlinear function of a d-vector.
inline MeanFunction random_function(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> lin(d), freq(d), quad(d);
  for (std::size_t j = 0; j < d; ++j) {
    lin[j] = normal(rng);
    freq[j] = normal(rng);
    quad[j] = normal(rng);
  }
  const double c = normal(rng);
  return [=](std::span<const double> s) {
    double v = c;
    for (std::size_t j = 0; j < s.size(); ++j) v += lin[j] * std::sin(freq[j] * s[j]) + quad[j] * s[j] * s[j];
    return v;
  };
}

}  // namespace cmtest
