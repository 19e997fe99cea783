#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace clustermatch {

enum class TreatmentLevel { ClusterLevel, UnitLevel };

struct UnitRecord {
  std::size_t unit_id = 0;
  std::size_t cluster_id = 0;
  int treatment = 0;
  double outcome = 0.0;
  std::vector<double> unit_covariates;
};

struct ClusterRecord {
  std::size_t cluster_id = 0;
  std::string label;
  std::vector<double> cluster_covariates;
  std::vector<std::size_t> member_units;
};

/// Clustered observational data. Units are indexed 0..N-1 in input order,
/// clusters 0..R-1 in first-appearance order. Immutable once built.
struct Dataset {
  std::vector<UnitRecord> units;
  std::vector<ClusterRecord> clusters;
  TreatmentLevel treatment_level = TreatmentLevel::ClusterLevel;
  std::vector<std::string> unit_covariate_names;
  std::vector<std::string> cluster_covariate_names;

  std::size_t n_units() const { return units.size(); }
  std::size_t n_clusters() const { return clusters.size(); }
  std::size_t n_unit_covariates() const { return unit_covariate_names.size(); }
  std::size_t n_cluster_covariates() const { return cluster_covariate_names.size(); }
  std::size_t n_treated() const;
  std::size_t n_control() const { return n_units() - n_treated(); }

  std::vector<double> outcomes() const;
  std::vector<int> treatments() const;
  std::vector<std::size_t> cluster_of() const;

  /// N x k_x matrix of unit covariates.
  Eigen::MatrixXd unit_covariate_matrix() const;
  /// N x k_z matrix: each unit carries its cluster's covariates.
  Eigen::MatrixXd cluster_covariate_matrix() const;
};

/// Builds a dataset from flat per-unit arrays. Cluster labels are interned
/// in first-appearance order; `cluster_covariates` holds one row per unit and
/// must be constant within each cluster (ConsistencyError otherwise).
Dataset make_dataset(const std::vector<std::string>& cluster_labels, const std::vector<int>& treatment,
                     const std::vector<double>& outcome, const Eigen::MatrixXd& unit_covariates,
                     const Eigen::MatrixXd& cluster_covariates, TreatmentLevel level,
                     std::vector<std::string> unit_covariate_names = {},
                     std::vector<std::string> cluster_covariate_names = {});

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const Dataset& ds);

/// Throws clustermatch::Error listing every violation when the dataset is invalid.
void require_valid(const Dataset& ds);

/// Column roles for CSV ingestion.
struct Schema {
  std::string outcome;
  std::string treatment;
  std::string cluster;
  std::vector<std::string> unit_covariates;
  std::vector<std::string> cluster_covariates;
  TreatmentLevel level = TreatmentLevel::ClusterLevel;
};

Dataset ingest_dataset(const std::filesystem::path& path, const Schema& schema);
Dataset ingest_dataset(std::istream& in, const Schema& schema);

/// Writes the dataset back as CSV (cluster, treatment, outcome, X..., Z...)
/// with round-trip precision.
void write_dataset_csv(std::ostream& out, const Dataset& ds);

}  // namespace clustermatch
