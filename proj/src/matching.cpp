#include "clustermatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "clustermatch/error.hpp"
#include "clustermatch/parallel.hpp"

namespace clustermatch {

namespace {
// Relative slack on squared distances when collecting ties.
constexpr double kTieTolerance = 1e-12;
}  // namespace

std::string_view to_string(Estimand e) { return e == Estimand::ATE ? "ATE" : "ATT"; }

std::string_view to_string(MatchScheme s) { return s == MatchScheme::ClusterOnly ? "cluster" : "all"; }

std::string_view to_string(TieHandling t) { return t == TieHandling::LowestId ? "lowest-id" : "average"; }

Eigen::MatrixXd matching_matrix(const Dataset& ds, MatchScheme scheme) {
  const Eigen::MatrixXd z = ds.cluster_covariate_matrix();
  if (scheme == MatchScheme::ClusterOnly) return z;
  const Eigen::MatrixXd x = ds.unit_covariate_matrix();
  Eigen::MatrixXd s(x.rows(), x.cols() + z.cols());
  s << x, z;
  return s;
}

Eigen::MatrixXd pooled_inverse_covariance(const Eigen::MatrixXd& s, double ridge) {
  if (s.rows() < 2 || s.cols() < 1) throw DomainError("pooled_inverse_covariance: need at least 2 rows and 1 column");
  if (!(ridge >= 0.0)) throw DomainError("pooled_inverse_covariance: ridge must be >= 0");

  const Eigen::RowVectorXd mean = s.colwise().mean();
  const Eigen::MatrixXd centered = s.rowwise() - mean;
  Eigen::MatrixXd cov = (centered.adjoint() * centered) / static_cast<double>(s.rows() - 1);
  cov.diagonal().array() += ridge;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const auto& values = eig.eigenvalues();
  const double largest = values.maxCoeff();
  const double smallest = values.minCoeff();
  if (!(largest > 0.0) || smallest <= 1e-12 * largest)
    throw SingularError(fmt::format(
        "matching covariance is singular (eigenvalues {:.3g}..{:.3g}); drop collinear covariates or use a larger ridge",
        smallest, largest));
  return eig.eigenvectors() * values.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

double mahalanobis(std::span<const double> x, std::span<const double> y, const Eigen::MatrixXd& inv_cov) {
  if (x.size() != y.size() || static_cast<Eigen::Index>(x.size()) != inv_cov.rows() || inv_cov.rows() != inv_cov.cols())
    throw DomainError("mahalanobis: dimension mismatch");
  const Eigen::Index d = inv_cov.rows();
  Eigen::VectorXd diff(d);
  for (Eigen::Index j = 0; j < d; ++j) diff(j) = x[j] - y[j];
  return std::sqrt(std::max(0.0, diff.dot(inv_cov * diff)));
}

MatchResult match_units(const Dataset& ds, const MatchConfig& cfg, Estimand estimand) {
  return match_units(ds, matching_matrix(ds, cfg.scheme), cfg, estimand);
}

MatchResult match_units(const Dataset& ds, const Eigen::MatrixXd& s, const MatchConfig& cfg, Estimand estimand) {
  if (cfg.m < 1) throw DomainError("match_units: m must be >= 1");
  const std::size_t n = ds.n_units();
  if (static_cast<std::size_t>(s.rows()) != n) throw DomainError("match_units: matching matrix has wrong row count");
  if (s.cols() == 0) throw DomainError("match_units: no covariates to match on");

  std::vector<std::size_t> treated, control;
  for (std::size_t i = 0; i < n; ++i) (ds.units[i].treatment == 1 ? treated : control).push_back(i);
  const auto m = static_cast<std::size_t>(cfg.m);
  if (control.size() < m || (estimand == Estimand::ATE && treated.size() < m))
    throw DomainError(fmt::format("match_units: need at least m = {} units in the opposite arm ({} treated, {} control)",
                                  cfg.m, treated.size(), control.size()));

  // Whitened coordinates: with inv_cov = L L^T, the Mahalanobis distance is
  // the Euclidean distance between rows of s * L.
  const Eigen::MatrixXd inv_cov = pooled_inverse_covariance(s, cfg.ridge);
  const Eigen::MatrixXd lower = Eigen::LLT<Eigen::MatrixXd>(inv_cov).matrixL();
  const Eigen::MatrixXd w = s * lower;
  const Eigen::Index d = w.cols();
  // Row-major copies keep the inner distance loop contiguous.
  std::vector<double> coords(n * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) coords[i * d + j] = w(static_cast<Eigen::Index>(i), j);

  MatchResult result;
  result.estimand = estimand;
  result.scheme = cfg.scheme;
  result.m = cfg.m;
  result.ties = cfg.ties;
  result.matched_sets.assign(n, {});
  result.k_counts.assign(n, 0);
  result.k_weight.assign(n, 0.0);
  result.y0_hat.assign(n, std::numeric_limits<double>::quiet_NaN());
  result.y1_hat.assign(n, std::numeric_limits<double>::quiet_NaN());

  std::vector<std::size_t> sources;
  if (estimand == Estimand::ATE) {
    sources.resize(n);
    for (std::size_t i = 0; i < n; ++i) sources[i] = i;
  } else {
    sources = treated;
  }

  parallel_for(sources.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t i = sources[k];
    const auto& pool = ds.units[i].treatment == 1 ? control : treated;
    const double* xi = &coords[i * d];
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(pool.size());
    for (std::size_t j : pool) {
      const double* xj = &coords[j * d];
      double acc = 0.0;
      for (Eigen::Index c = 0; c < d; ++c) {
        const double diff = xi[c] - xj[c];
        acc += diff * diff;
      }
      cand.emplace_back(acc, j);
    }
    auto& set = result.matched_sets[i];
    if (cfg.ties == TieHandling::LowestId) {
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(m), cand.end());
      set.reserve(m);
      for (std::size_t q = 0; q < m; ++q) set.push_back(cand[q].second);
    } else {
      std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(m - 1), cand.end());
      const double cutoff = cand[m - 1].first * (1.0 + kTieTolerance);
      const auto tail = std::partition(cand.begin(), cand.end(), [&](const auto& c) { return c.first <= cutoff; });
      std::sort(cand.begin(), tail);
      for (auto it = cand.begin(); it != tail; ++it) set.push_back(it->second);
    }
  });

  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = ds.units[i];
    (u.treatment == 1 ? result.y1_hat : result.y0_hat)[i] = u.outcome;
    const auto& set = result.matched_sets[i];
    if (set.empty()) continue;
    const double w = result.member_weight(i);
    double sum = 0.0;
    for (auto j : set) {
      ++result.k_counts[j];
      result.k_weight[j] += w * static_cast<double>(m);
      sum += ds.units[j].outcome;
    }
    (u.treatment == 1 ? result.y0_hat : result.y1_hat)[i] = sum / static_cast<double>(set.size());
  }
  return result;
}

void write_match_csv(std::ostream& out, const Dataset& ds, const MatchResult& match) {
  out << "unit_id,treatment,k,k_weight,matched,y0_hat,y1_hat\n";
  for (std::size_t i = 0; i < match.size(); ++i) {
    out << i << ',' << ds.units[i].treatment << ',' << match.k_counts[i] << ',' << fmt::format("{}", match.k_weight[i])
        << ',';
    for (std::size_t q = 0; q < match.matched_sets[i].size(); ++q) out << (q ? ";" : "") << match.matched_sets[i][q];
    out << ',' << fmt::format("{}", match.y0_hat[i]) << ',' << fmt::format("{}", match.y1_hat[i]) << '\n';
  }
}

}  // namespace clustermatch
