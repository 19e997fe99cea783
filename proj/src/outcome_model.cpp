#include "clustermatch/outcome_model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "clustermatch/error.hpp"

namespace clustermatch {

std::string_view to_string(BasisKind k) { return k == BasisKind::SievePoly ? "sieve" : "spline"; }

namespace {

constexpr double kCollinearTol = 1e-10;

// All exponent vectors of total degree `deg` over `dim` variables. Degree 2 is
// ordered squares first, then products (j<k); higher degrees lexicographically.
void monomials_of_degree(std::size_t dim, int deg, std::vector<std::vector<int>>& out) {
  if (deg == 1) {
    for (std::size_t j = 0; j < dim; ++j) {
      std::vector<int> e(dim, 0);
      e[j] = 1;
      out.push_back(std::move(e));
    }
    return;
  }
  if (deg == 2) {
    for (std::size_t j = 0; j < dim; ++j) {
      std::vector<int> e(dim, 0);
      e[j] = 2;
      out.push_back(std::move(e));
    }
    for (std::size_t j = 0; j < dim; ++j)
      for (std::size_t k = j + 1; k < dim; ++k) {
        std::vector<int> e(dim, 0);
        e[j] = e[k] = 1;
        out.push_back(std::move(e));
      }
    return;
  }
  std::vector<int> e(dim, 0);
  auto rec = [&](auto&& self, std::size_t pos, int left) -> void {
    if (pos + 1 == dim) {
      e[pos] = left;
      out.push_back(e);
      return;
    }
    for (int p = left; p >= 0; --p) {
      e[pos] = p;
      self(self, pos + 1, left - p);
    }
  };
  if (dim > 0) rec(rec, 0, deg);
}

// Type-7 empirical quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Basis Basis::fit(const Eigen::MatrixXd& s_rows, const BasisSpec& spec) {
  if (s_rows.rows() < 1) throw DomainError("build_basis: need at least one row");
  if (spec.kind == BasisKind::SievePoly && spec.degree < 1) throw DomainError("build_basis: degree must be >= 1");
  if (spec.kind == BasisKind::LinearSpline && spec.knots_per_dim < 0)
    throw DomainError("build_basis: knots_per_dim must be >= 0");

  Basis b;
  b.spec_ = spec;
  b.dim_ = static_cast<std::size_t>(s_rows.cols());
  if (spec.kind == BasisKind::SievePoly) {
    for (int deg = 1; deg <= spec.degree; ++deg) monomials_of_degree(b.dim_, deg, b.monomials_);
  } else {
    b.knots_.resize(b.dim_);
    for (std::size_t j = 0; j < b.dim_; ++j) {
      std::vector<double> col(s_rows.col(static_cast<Eigen::Index>(j)).begin(),
                              s_rows.col(static_cast<Eigen::Index>(j)).end());
      std::sort(col.begin(), col.end());
      for (int k = 1; k <= spec.knots_per_dim; ++k)
        b.knots_[j].push_back(quantile_sorted(col, static_cast<double>(k) / (spec.knots_per_dim + 1)));
    }
  }
  return b;
}

std::size_t Basis::size() const {
  if (spec_.kind == BasisKind::SievePoly) return 1 + monomials_.size();
  std::size_t p = 1 + dim_;
  for (const auto& k : knots_) p += k.size();
  return p;
}

void Basis::expand_row(std::span<const double> s, std::span<double> out) const {
  if (s.size() != dim_) throw DomainError(fmt::format("basis expects {} inputs, got {}", dim_, s.size()));
  std::size_t c = 0;
  out[c++] = 1.0;
  if (spec_.kind == BasisKind::SievePoly) {
    for (const auto& e : monomials_) {
      double v = 1.0;
      for (std::size_t j = 0; j < dim_; ++j)
        for (int p = 0; p < e[j]; ++p) v *= s[j];
      out[c++] = v;
    }
  } else {
    for (std::size_t j = 0; j < dim_; ++j) out[c++] = s[j];
    for (std::size_t j = 0; j < dim_; ++j)
      for (double q : knots_[j]) out[c++] = std::max(s[j] - q, 0.0);
  }
}

Eigen::MatrixXd Basis::expand(const Eigen::MatrixXd& s_rows) const {
  if (static_cast<std::size_t>(s_rows.cols()) != dim_)
    throw DomainError(fmt::format("basis expects {} inputs, got {}", dim_, s_rows.cols()));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(s_rows.rows(),
                                                                            static_cast<Eigen::Index>(size()));
  std::vector<double> row(dim_);
  for (Eigen::Index i = 0; i < s_rows.rows(); ++i) {
    for (std::size_t j = 0; j < dim_; ++j) row[j] = s_rows(i, static_cast<Eigen::Index>(j));
    expand_row(row, std::span<double>(out.row(i).data(), size()));
  }
  return out;
}

Eigen::MatrixXd build_basis(const Eigen::MatrixXd& s_rows, const BasisSpec& spec) {
  return Basis::fit(s_rows, spec).expand(s_rows);
}

LeastSquaresFit solve_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n) throw DomainError("solve_least_squares: y length does not match design rows");
  if (n == 0) throw DomainError("solve_least_squares: no rows");

  LeastSquaresFit fit;
  fit.n = static_cast<std::size_t>(n);
  fit.column_mean = Eigen::VectorXd::Zero(p);
  fit.column_scale = Eigen::VectorXd::Zero(p);

  // Centring is only equivalent to the raw fit when the design spans the
  // constant vector, so it is applied only then. Columns are scaled to unit
  // sd (or unit RMS without centring); a constant non-zero column becomes a
  // column of ones.
  bool has_constant = false;
  for (Eigen::Index j = 0; j < p; ++j)
    if (design.col(j).maxCoeff() == design.col(j).minCoeff() && design(0, j) != 0.0) has_constant = true;

  const double denom = static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  Eigen::MatrixXd scaled(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto col = design.col(j);
    const bool constant = col.maxCoeff() == col.minCoeff();
    if (constant) {
      fit.column_scale(j) = col(0);
    } else if (has_constant) {
      fit.column_mean(j) = col.mean();
      fit.column_scale(j) = std::sqrt((col.array() - fit.column_mean(j)).square().sum() / denom);
    } else {
      fit.column_scale(j) = std::sqrt(col.squaredNorm() / static_cast<double>(n));
    }
    if (fit.column_scale(j) != 0.0)
      scaled.col(j) = (col.array() - fit.column_mean(j)) / fit.column_scale(j);
    else
      scaled.col(j).setZero();
  }

  // Gram-Schmidt (twice) against kept columns decides which columns survive.
  Eigen::MatrixXd basis(n, std::min(n, p));
  Eigen::Index rank = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd v = scaled.col(j);
    const double norm = v.norm();
    if (norm == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index k = 0; k < rank; ++k) v -= basis.col(k).dot(v) * basis.col(k);
    const double resid = v.norm();
    if (resid <= kCollinearTol * norm) continue;
    basis.col(rank++) = v / resid;
    fit.kept.push_back(static_cast<std::size_t>(j));
  }
  if (fit.kept.empty()) throw DomainError("least squares: design has no non-zero columns");
  // Rank saturated by the row count while columns remain: underdetermined.
  if (rank == n && p > n)
    throw DomainError(fmt::format("least squares: {} rows are too few for {} design columns", n, p));
  for (Eigen::Index j = 0; j < p; ++j)
    if (std::find(fit.kept.begin(), fit.kept.end(), static_cast<std::size_t>(j)) == fit.kept.end())
      fit.column_scale(j) = 0.0;
  fit.has_intercept = !fit.kept.empty() && fit.kept.front() == 0 && fit.column_mean(0) == 0.0;

  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(fit.kept.size()));
  for (std::size_t k = 0; k < fit.kept.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = scaled.col(fit.kept[k]);
  fit.coefficients = x.householderQr().solve(y);
  fit.rss = (y - x * fit.coefficients).squaredNorm();
  return fit;
}

double LeastSquaresFit::predict(std::span<const double> row) const {
  if (static_cast<Eigen::Index>(row.size()) != column_mean.size())
    throw DomainError("least squares predict: design row has wrong length");
  double v = 0.0;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto j = kept[k];
    v += coefficients(static_cast<Eigen::Index>(k)) * (row[j] - column_mean(static_cast<Eigen::Index>(j))) /
         column_scale(static_cast<Eigen::Index>(j));
  }
  return v;
}

OutcomeModel::OutcomeModel(int arm, Basis basis, LeastSquaresFit fit)
    : arm_(arm), basis_(std::move(basis)), fit_(std::move(fit)) {}

double OutcomeModel::predict(std::span<const double> s) const {
  if (s.size() != basis_.input_dim())
    throw DomainError(fmt::format("outcome model expects {} inputs, got {}", basis_.input_dim(), s.size()));
  std::vector<double> row(basis_.size());
  basis_.expand_row(s, row);
  return fit_.predict(row);
}

std::vector<double> OutcomeModel::predict_rows(const Eigen::MatrixXd& s_rows) const {
  if (static_cast<std::size_t>(s_rows.cols()) != basis_.input_dim())
    throw DomainError(fmt::format("outcome model expects {} inputs, got {}", basis_.input_dim(), s_rows.cols()));
  std::vector<double> out(static_cast<std::size_t>(s_rows.rows()));
  std::vector<double> s(basis_.input_dim()), row(basis_.size());
  for (Eigen::Index i = 0; i < s_rows.rows(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = s_rows(i, static_cast<Eigen::Index>(j));
    basis_.expand_row(s, row);
    out[static_cast<std::size_t>(i)] = fit_.predict(row);
  }
  return out;
}

MeanFunction OutcomeModel::as_function() const {
  return [model = *this](std::span<const double> s) { return model.predict(s); };
}

OutcomeModel fit_arm(const Eigen::MatrixXd& s_rows, std::span<const double> y, const BasisSpec& spec, int arm) {
  if (static_cast<std::size_t>(s_rows.rows()) != y.size()) throw DomainError("fit_arm: y length does not match rows");
  Basis basis = Basis::fit(s_rows, spec);
  const Eigen::MatrixXd design = basis.expand(s_rows);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  return OutcomeModel(arm, std::move(basis), solve_least_squares(design, yv));
}

}  // namespace clustermatch
