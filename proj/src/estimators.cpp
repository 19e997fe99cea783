#include "clustermatch/estimators.hpp"

#include <cassert>
#include <cmath>

#include <fmt/format.h>

#include "clustermatch/error.hpp"

namespace clustermatch {

namespace {

void require_mode(const Dataset& ds, const MatchResult& match, Estimand expected, const char* op) {
  if (match.estimand != expected)
    throw DomainError(fmt::format("{}: match was built for {}, expected {}", op, to_string(match.estimand),
                                  to_string(expected)));
  if (match.size() != ds.n_units()) throw DomainError(fmt::format("{}: match does not belong to the dataset", op));
}

struct ArmMeans {
  std::vector<double> mu0;
  std::vector<double> mu1;
};

std::vector<double> evaluate(const MeanFunction& fn, const Eigen::MatrixXd& s) {
  std::vector<double> out(static_cast<std::size_t>(s.rows()));
  std::vector<double> row(static_cast<std::size_t>(s.cols()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) row[static_cast<std::size_t>(j)] = s(i, j);
    out[static_cast<std::size_t>(i)] = fn(row);
  }
  return out;
}

ArmMeans evaluate_arms(const Dataset& ds, MatchScheme scheme, const MeanFunction& mu0, const MeanFunction* mu1) {
  const Eigen::MatrixXd s = matching_matrix(ds, scheme);
  ArmMeans m;
  m.mu0 = evaluate(mu0, s);
  m.mu1 = mu1 ? evaluate(*mu1, s) : std::vector<double>(m.mu0.size(), 0.0);
  return m;
}

void require_model_dim(const Dataset& ds, const MatchResult& match, const OutcomeModel& model, const char* op) {
  const auto d = static_cast<std::size_t>(matching_matrix(ds, match.scheme).cols());
  if (model.input_dim() != d)
    throw DomainError(fmt::format("{}: outcome model takes {} inputs but scheme '{}' matches on {}", op,
                                  model.input_dim(), to_string(match.scheme), d));
}

// Average of f over the matched set J(i).
template <typename F>
double matched_mean(const MatchResult& match, std::size_t i, F&& f) {
  double s = 0.0;
  for (auto j : match.matched_sets[i]) s += f(j);
  return s * match.member_weight(i);
}

double bias_ate(const Dataset& ds, const MatchResult& match, const ArmMeans& mu) {
  double total = 0.0;
  for (std::size_t i = 0; i < ds.n_units(); ++i) {
    const int a = ds.units[i].treatment;
    const auto& other = a == 1 ? mu.mu0 : mu.mu1;
    const double disc = matched_mean(match, i, [&](std::size_t j) { return other[i] - other[j]; });
    total += (2 * a - 1) * disc;
  }
  return total / static_cast<double>(ds.n_units());
}

double bias_att(const Dataset& ds, const MatchResult& match, const std::vector<double>& mu0) {
  double total = 0.0;
  for (std::size_t i = 0; i < ds.n_units(); ++i) {
    if (ds.units[i].treatment != 1) continue;
    total += matched_mean(match, i, [&](std::size_t j) { return mu0[i] - mu0[j]; });
  }
  return total / static_cast<double>(ds.n_treated());
}

[[maybe_unused]] bool close(double a, double b) {
  return std::abs(a - b) <= 1e-10 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

double tau_mat_ate(const Dataset& ds, const MatchResult& match) {
  require_mode(ds, match, Estimand::ATE, "tau_mat_ate");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.n_units(); ++i) {
    const auto& u = ds.units[i];
    total += (2 * u.treatment - 1) * (1.0 + match.k_weight[i] / match.m) * u.outcome;
  }
  const double tau = total / static_cast<double>(ds.n_units());
  assert(close(tau, tau_mat_ate_imputed(ds, match)));
  return tau;
}

double tau_mat_ate_imputed(const Dataset& ds, const MatchResult& match) {
  require_mode(ds, match, Estimand::ATE, "tau_mat_ate");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.n_units(); ++i) total += match.y1_hat[i] - match.y0_hat[i];
  return total / static_cast<double>(ds.n_units());
}

double tau_mat_att(const Dataset& ds, const MatchResult& match) {
  require_mode(ds, match, Estimand::ATT, "tau_mat_att");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.n_units(); ++i) {
    const auto& u = ds.units[i];
    total += (u.treatment - (1 - u.treatment) * match.k_weight[i] / match.m) * u.outcome;
  }
  const double tau = total / static_cast<double>(ds.n_treated());
  assert(close(tau, tau_mat_att_imputed(ds, match)));
  return tau;
}

double tau_mat_att_imputed(const Dataset& ds, const MatchResult& match) {
  require_mode(ds, match, Estimand::ATT, "tau_mat_att");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.n_units(); ++i)
    if (ds.units[i].treatment == 1) total += ds.units[i].outcome - match.y0_hat[i];
  return total / static_cast<double>(ds.n_treated());
}

double bias_term_ate(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0, const MeanFunction& mu1) {
  require_mode(ds, match, Estimand::ATE, "bias_term_ate");
  return bias_ate(ds, match, evaluate_arms(ds, match.scheme, mu0, &mu1));
}

double bias_term_ate(const Dataset& ds, const MatchResult& match, const OutcomeModel& mu0, const OutcomeModel& mu1) {
  require_model_dim(ds, match, mu0, "bias_term_ate");
  require_model_dim(ds, match, mu1, "bias_term_ate");
  return bias_term_ate(ds, match, mu0.as_function(), mu1.as_function());
}

double bias_term_att(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0) {
  require_mode(ds, match, Estimand::ATT, "bias_term_att");
  return bias_att(ds, match, evaluate_arms(ds, match.scheme, mu0, nullptr).mu0);
}

double bias_term_att(const Dataset& ds, const MatchResult& match, const OutcomeModel& mu0) {
  require_model_dim(ds, match, mu0, "bias_term_att");
  return bias_term_att(ds, match, mu0.as_function());
}

EstimateReport bias_corrected_ate(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0,
                                  const MeanFunction& mu1) {
  require_mode(ds, match, Estimand::ATE, "bias_corrected_ate");
  const auto mu = evaluate_arms(ds, match.scheme, mu0, &mu1);

  EstimateReport r;
  r.estimand = Estimand::ATE;
  r.tau_mat = tau_mat_ate(ds, match);
  r.b_hat = bias_ate(ds, match, mu);
  r.tau = r.tau_mat - r.b_hat;

  const std::size_t n = ds.n_units();
  r.psi.resize(n);
  r.contrast.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = ds.units[i];
    const double own = u.treatment == 1 ? mu.mu1[i] : mu.mu0[i];
    r.contrast[i] = mu.mu1[i] - mu.mu0[i];
    r.psi[i] = r.contrast[i] +
               (2 * u.treatment - 1) * (1.0 + match.k_weight[i] / match.m) * (u.outcome - own);
  }
  return r;
}

EstimateReport bias_corrected_ate(const Dataset& ds, const MatchResult& match, const OutcomeModel& mu0,
                                  const OutcomeModel& mu1) {
  require_model_dim(ds, match, mu0, "bias_corrected_ate");
  require_model_dim(ds, match, mu1, "bias_corrected_ate");
  return bias_corrected_ate(ds, match, mu0.as_function(), mu1.as_function());
}

EstimateReport bias_corrected_att(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0,
                                  const MeanFunction& mu1) {
  require_mode(ds, match, Estimand::ATT, "bias_corrected_att");
  const auto mu = evaluate_arms(ds, match.scheme, mu0, &mu1);

  EstimateReport r;
  r.estimand = Estimand::ATT;
  r.tau_mat = tau_mat_att(ds, match);
  r.b_hat = bias_att(ds, match, mu.mu0);
  r.tau = r.tau_mat - r.b_hat;

  // Controls contribute -(K/M) times their residual; the matched-mean terms
  // of the bias correction cancel against these exactly.
  const std::size_t n = ds.n_units();
  r.psi.resize(n);
  r.contrast.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = ds.units[i];
    const double resid = u.outcome - mu.mu0[i];
    r.contrast[i] = mu.mu1[i] - mu.mu0[i];
    r.psi[i] = u.treatment == 1 ? resid : -(match.k_weight[i] / match.m) * resid;
  }
  return r;
}

EstimateReport bias_corrected_att(const Dataset& ds, const MatchResult& match, const OutcomeModel& mu0,
                                  const OutcomeModel& mu1) {
  require_model_dim(ds, match, mu0, "bias_corrected_att");
  require_model_dim(ds, match, mu1, "bias_corrected_att");
  return bias_corrected_att(ds, match, mu0.as_function(), mu1.as_function());
}

Decomposition decompose(const Dataset& ds, const MatchResult& match, const MeanFunction& mu0, const MeanFunction& mu1,
                        Estimand estimand) {
  require_mode(ds, match, estimand, "decompose");
  const auto mu = evaluate_arms(ds, match.scheme, mu0, &mu1);
  const std::size_t n = ds.n_units();
  Decomposition d;
  if (estimand == Estimand::ATE) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& u = ds.units[i];
      const double own = u.treatment == 1 ? mu.mu1[i] : mu.mu0[i];
      d.tau_bar += mu.mu1[i] - mu.mu0[i];
      d.e_m += (2 * u.treatment - 1) * (1.0 + match.k_weight[i] / match.m) * (u.outcome - own);
    }
    d.tau_bar /= static_cast<double>(n);
    d.e_m /= static_cast<double>(n);
    d.b_m = bias_ate(ds, match, mu);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& u = ds.units[i];
      const double own = u.treatment == 1 ? mu.mu1[i] : mu.mu0[i];
      if (u.treatment == 1) d.tau_bar += mu.mu1[i] - mu.mu0[i];
      d.e_m += (u.treatment - (1 - u.treatment) * match.k_weight[i] / match.m) * (u.outcome - own);
    }
    const auto n1 = static_cast<double>(ds.n_treated());
    d.tau_bar /= n1;
    d.e_m /= n1;
    d.b_m = bias_att(ds, match, mu.mu0);
  }
  return d;
}

VarianceComponents plugin_variance_components(const Dataset& ds, const MatchResult& match,
                                              std::span<const double> sigma2, const EstimateReport& report) {
  require_mode(ds, match, report.estimand, "plugin_variance_components");
  const std::size_t n = ds.n_units();
  if (sigma2.size() != n || report.contrast.size() != n)
    throw DomainError("plugin_variance_components: per-unit inputs have wrong length");

  VarianceComponents v;
  if (report.estimand == Estimand::ATE) {
    double centre = 0.0;
    for (double c : report.contrast) centre += c;
    centre /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 1.0 + match.k_weight[i] / match.m;
      v.sigma1_sq += w * w * sigma2[i];
      v.sigma2_sq += (report.contrast[i] - centre) * (report.contrast[i] - centre);
    }
    v.sigma1_sq /= static_cast<double>(n);
    v.sigma2_sq /= static_cast<double>(n);
  } else {
    const auto n1 = static_cast<double>(ds.n_treated());
    double centre = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (ds.units[i].treatment == 1) centre += report.contrast[i];
    centre /= n1;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = ds.units[i].treatment;
      const double w = a - (1 - a) * match.k_weight[i] / match.m;
      v.sigma1_sq += w * w * sigma2[i];
      if (a == 1) v.sigma2_sq += (report.contrast[i] - centre) * (report.contrast[i] - centre);
    }
    v.sigma1_sq /= n1;
    v.sigma2_sq /= n1;
  }
  return v;
}

std::vector<double> squared_residuals(const Dataset& ds, MatchScheme scheme, const MeanFunction& mu0,
                                      const MeanFunction& mu1) {
  const auto mu = evaluate_arms(ds, scheme, mu0, &mu1);
  std::vector<double> out(ds.n_units());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& u = ds.units[i];
    const double r = u.outcome - (u.treatment == 1 ? mu.mu1[i] : mu.mu0[i]);
    out[i] = r * r;
  }
  return out;
}

}  // namespace clustermatch
