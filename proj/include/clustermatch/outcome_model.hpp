#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace clustermatch {

enum class BasisKind { SievePoly, LinearSpline };

std::string_view to_string(BasisKind k);

struct BasisSpec {
  BasisKind kind = BasisKind::SievePoly;
  int degree = 2;         // SievePoly: maximum total degree
  int knots_per_dim = 3;  // LinearSpline: hinge knots at empirical quantiles
};

/// Series basis fixed on training rows. For SievePoly the columns are the
/// intercept followed by monomials in increasing total degree (degree 2:
/// squares, then pairwise products j<k). For LinearSpline: intercept, each
/// s_j, then max(s_j - q, 0) for each dimension's knots q.
class Basis {
 public:
  Basis() = default;
  static Basis fit(const Eigen::MatrixXd& s_rows, const BasisSpec& spec);

  Eigen::MatrixXd expand(const Eigen::MatrixXd& s_rows) const;
  void expand_row(std::span<const double> s, std::span<double> out) const;

  std::size_t input_dim() const { return dim_; }
  std::size_t size() const;
  const BasisSpec& spec() const { return spec_; }
  const std::vector<std::vector<double>>& knots() const { return knots_; }

 private:
  BasisSpec spec_;
  std::size_t dim_ = 0;
  std::vector<std::vector<int>> monomials_;  // exponent vectors, SievePoly only
  std::vector<std::vector<double>> knots_;   // per dimension, LinearSpline only
};

/// Design matrix of `spec` on the rows it was built from.
Eigen::MatrixXd build_basis(const Eigen::MatrixXd& s_rows, const BasisSpec& spec);

/// Least-squares fit on internally standardized columns. Columns whose
/// residual after projection on earlier kept columns falls below 1e-10 of
/// their norm are dropped; `kept` records the surviving column indices.
struct LeastSquaresFit {
  std::vector<std::size_t> kept;
  Eigen::VectorXd coefficients;  // scaled basis, one per kept column
  Eigen::VectorXd column_mean;   // over all input columns
  Eigen::VectorXd column_scale;  // 0 for dropped/constant columns
  bool has_intercept = false;    // column 0 constant and kept
  double rss = 0.0;
  std::size_t n = 0;

  double predict(std::span<const double> design_row) const;
};

LeastSquaresFit solve_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

using MeanFunction = std::function<double(std::span<const double>)>;

/// Fitted mu_a(s) for one treatment arm.
class OutcomeModel {
 public:
  OutcomeModel() = default;
  OutcomeModel(int arm, Basis basis, LeastSquaresFit fit);

  double predict(std::span<const double> s) const;
  std::vector<double> predict_rows(const Eigen::MatrixXd& s_rows) const;

  int arm() const { return arm_; }
  std::size_t input_dim() const { return basis_.input_dim(); }
  const Basis& basis() const { return basis_; }
  const LeastSquaresFit& fit() const { return fit_; }

  MeanFunction as_function() const;

 private:
  int arm_ = 0;
  Basis basis_;
  LeastSquaresFit fit_;
};

/// Fits mu_arm on the given rows and outcomes (already restricted to the arm).
OutcomeModel fit_arm(const Eigen::MatrixXd& s_rows, std::span<const double> y, const BasisSpec& spec, int arm);

}  // namespace clustermatch
