#include "clustermatch/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "clustermatch/error.hpp"

namespace clustermatch {

namespace {

constexpr double kBoxCoxFloor = 1e-6;

double transform_one(double x, double lambda) {
  return lambda == 0.0 ? std::log(x) : (std::pow(x, lambda) - 1.0) / lambda;
}

struct Moments {
  double weight = 0.0;
  double mean = 0.0;
  double var = 0.0;
};

// Frequency-weighted mean and variance (divisor sum(w) - 1).
Moments weighted_moments(std::span<const double> x, std::span<const double> w) {
  Moments m;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    m.weight += wi;
    m.mean += wi * x[i];
  }
  if (m.weight <= 0.0) throw DomainError("smd: arm has zero total weight");
  m.mean /= m.weight;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    ss += wi * (x[i] - m.mean) * (x[i] - m.mean);
  }
  m.var = m.weight > 1.0 ? ss / (m.weight - 1.0) : 0.0;
  return m;
}

}  // namespace

double box_cox_log_likelihood(std::span<const double> x, double lambda) {
  const auto n = static_cast<double>(x.size());
  double mean = 0.0, log_sum = 0.0;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = transform_one(x[i], lambda);
    mean += y[i];
    log_sum += std::log(x[i]);
  }
  mean /= n;
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  return -0.5 * n * std::log(ss / n) + (lambda - 1.0) * log_sum;
}

BoxCoxTransform box_cox_fit(std::span<const double> values) {
  if (values.empty()) throw DomainError("box_cox_fit: no values");
  for (double v : values)
    if (!std::isfinite(v)) throw DomainError("box_cox_fit: non-finite value");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) throw DomainError("box_cox_fit: constant input, profile likelihood undefined");

  BoxCoxTransform t;
  t.shift = *lo > 0.0 ? 0.0 : kBoxCoxFloor - *lo;
  std::vector<double> shifted(values.begin(), values.end());
  for (double& v : shifted) v += t.shift;

  double best = -std::numeric_limits<double>::infinity();
  for (int k = -20; k <= 20; ++k) {
    const double lambda = k / 10.0;
    const double ll = box_cox_log_likelihood(shifted, lambda);
    if (ll > best) {
      best = ll;
      t.lambda = lambda;
    }
  }
  return t;
}

std::vector<double> box_cox_apply(const BoxCoxTransform& t, std::span<const double> values) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) {
    const double x = v + t.shift;
    if (!(x > 0.0)) throw DomainError(fmt::format("box_cox_apply: shifted value {} is not positive", x));
    out.push_back(transform_one(x, t.lambda));
  }
  return out;
}

BoxCoxTransform box_cox_column(Dataset& ds, const std::string& name) {
  const auto find = [&](const std::vector<std::string>& names) {
    return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
  };
  if (const auto j = find(ds.unit_covariate_names); j < ds.unit_covariate_names.size()) {
    std::vector<double> v;
    v.reserve(ds.n_units());
    for (const auto& u : ds.units) v.push_back(u.unit_covariates[j]);
    const auto t = box_cox_fit(v);
    const auto y = box_cox_apply(t, v);
    for (std::size_t i = 0; i < ds.n_units(); ++i) ds.units[i].unit_covariates[j] = y[i];
    return t;
  }
  if (const auto j = find(ds.cluster_covariate_names); j < ds.cluster_covariate_names.size()) {
    std::vector<double> v;
    v.reserve(ds.n_clusters());
    for (const auto& c : ds.clusters) v.push_back(c.cluster_covariates[j]);
    const auto t = box_cox_fit(v);
    const auto y = box_cox_apply(t, v);
    for (std::size_t r = 0; r < ds.n_clusters(); ++r) ds.clusters[r].cluster_covariates[j] = y[r];
    return t;
  }
  throw SchemaError(fmt::format("box-cox column '{}' is not a unit or cluster covariate", name));
}

Standardized standardize(std::span<const double> values) {
  if (values.size() < 2) throw DomainError("standardize: need at least 2 values");
  Standardized s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  if (!(s.sd > 0.0)) throw DomainError("standardize: constant input");
  s.values.reserve(values.size());
  for (double v : values) s.values.push_back((v - s.mean) / s.sd);
  return s;
}

double smd(std::span<const double> treated, std::span<const double> control, std::span<const double> treated_weights,
           std::span<const double> control_weights) {
  if (treated.empty() || control.empty()) throw DomainError("smd: both arms must be non-empty");
  if ((!treated_weights.empty() && treated_weights.size() != treated.size()) ||
      (!control_weights.empty() && control_weights.size() != control.size()))
    throw DomainError("smd: weight length mismatch");
  const auto t = weighted_moments(treated, treated_weights);
  const auto c = weighted_moments(control, control_weights);
  const double pooled = std::sqrt((t.var + c.var) / 2.0);
  if (!(pooled > 0.0)) throw DomainError("smd: pooled standard deviation is zero");
  return (t.mean - c.mean) / pooled;
}

BalanceTable balance_table(const Dataset& ds, const MatchResult* match) {
  if (match && match->size() != ds.n_units()) throw DomainError("balance_table: match does not belong to dataset");

  std::vector<double> w_treated, w_control;
  if (match) {
    const double m = match->m;
    for (std::size_t i = 0; i < ds.n_units(); ++i) {
      const double k = match->k_weight[i] / m;
      const bool treated = ds.units[i].treatment == 1;
      const double w = match->estimand == Estimand::ATE ? 1.0 + k : (treated ? 1.0 : k);
      (treated ? w_treated : w_control).push_back(w);
    }
  }

  auto row_for = [&](const std::string& name, const Eigen::VectorXd& column) {
    std::vector<double> t, c;
    for (std::size_t i = 0; i < ds.n_units(); ++i)
      (ds.units[i].treatment == 1 ? t : c).push_back(column(static_cast<Eigen::Index>(i)));
    BalanceRow row;
    row.covariate = name;
    row.smd_unadjusted = smd(t, c);
    if (match) {
      const auto ut = weighted_moments(t, {});
      const auto uc = weighted_moments(c, {});
      const double pooled = std::sqrt((ut.var + uc.var) / 2.0);
      row.smd_adjusted = (weighted_moments(t, w_treated).mean - weighted_moments(c, w_control).mean) / pooled;
    }
    return row;
  };

  BalanceTable table;
  const Eigen::MatrixXd x = ds.unit_covariate_matrix();
  const Eigen::MatrixXd z = ds.cluster_covariate_matrix();
  for (Eigen::Index j = 0; j < x.cols(); ++j) table.rows.push_back(row_for(ds.unit_covariate_names[j], x.col(j)));
  for (Eigen::Index j = 0; j < z.cols(); ++j) table.rows.push_back(row_for(ds.cluster_covariate_names[j], z.col(j)));
  return table;
}

void write_balance_csv(std::ostream& out, const BalanceTable& table) {
  const bool adjusted = table.has_adjusted();
  out << "covariate,smd_unadjusted" << (adjusted ? ",smd_adjusted" : "") << '\n';
  for (const auto& r : table.rows) {
    out << r.covariate << ',' << fmt::format("{}", r.smd_unadjusted);
    if (adjusted) out << ',' << fmt::format("{}", *r.smd_adjusted);
    out << '\n';
  }
}

}  // namespace clustermatch
