#include "clustermatch/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "clustermatch/error.hpp"

namespace clustermatch {

std::size_t Dataset::n_treated() const {
  std::size_t n = 0;
  for (const auto& u : units) n += u.treatment == 1;
  return n;
}

std::vector<double> Dataset::outcomes() const {
  std::vector<double> y;
  y.reserve(units.size());
  for (const auto& u : units) y.push_back(u.outcome);
  return y;
}

std::vector<int> Dataset::treatments() const {
  std::vector<int> a;
  a.reserve(units.size());
  for (const auto& u : units) a.push_back(u.treatment);
  return a;
}

std::vector<std::size_t> Dataset::cluster_of() const {
  std::vector<std::size_t> c;
  c.reserve(units.size());
  for (const auto& u : units) c.push_back(u.cluster_id);
  return c;
}

Eigen::MatrixXd Dataset::unit_covariate_matrix() const {
  const auto kx = static_cast<Eigen::Index>(n_unit_covariates());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(units.size()), kx);
  for (std::size_t i = 0; i < units.size(); ++i)
    for (Eigen::Index j = 0; j < kx; ++j) m(static_cast<Eigen::Index>(i), j) = units[i].unit_covariates[j];
  return m;
}

Eigen::MatrixXd Dataset::cluster_covariate_matrix() const {
  const auto kz = static_cast<Eigen::Index>(n_cluster_covariates());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(units.size()), kz);
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& z = clusters[units[i].cluster_id].cluster_covariates;
    for (Eigen::Index j = 0; j < kz; ++j) m(static_cast<Eigen::Index>(i), j) = z[j];
  }
  return m;
}

Dataset make_dataset(const std::vector<std::string>& cluster_labels, const std::vector<int>& treatment,
                     const std::vector<double>& outcome, const Eigen::MatrixXd& unit_covariates,
                     const Eigen::MatrixXd& cluster_covariates, TreatmentLevel level,
                     std::vector<std::string> unit_covariate_names,
                     std::vector<std::string> cluster_covariate_names) {
  const std::size_t n = cluster_labels.size();
  if (treatment.size() != n || outcome.size() != n || static_cast<std::size_t>(unit_covariates.rows()) != n ||
      static_cast<std::size_t>(cluster_covariates.rows()) != n)
    throw SchemaError("make_dataset: per-unit inputs have different lengths");

  if (unit_covariate_names.empty())
    for (Eigen::Index j = 0; j < unit_covariates.cols(); ++j) unit_covariate_names.push_back(fmt::format("x{}", j + 1));
  if (cluster_covariate_names.empty())
    for (Eigen::Index j = 0; j < cluster_covariates.cols(); ++j)
      cluster_covariate_names.push_back(fmt::format("z{}", j + 1));
  if (unit_covariate_names.size() != static_cast<std::size_t>(unit_covariates.cols()) ||
      cluster_covariate_names.size() != static_cast<std::size_t>(cluster_covariates.cols()))
    throw SchemaError("make_dataset: covariate names do not match column counts");

  Dataset ds;
  ds.treatment_level = level;
  ds.unit_covariate_names = std::move(unit_covariate_names);
  ds.cluster_covariate_names = std::move(cluster_covariate_names);
  ds.units.reserve(n);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    if (treatment[i] != 0 && treatment[i] != 1)
      throw ParseError(fmt::format("row {}: treatment must be 0 or 1, got {}", i + 1, treatment[i]), i + 1,
                       "treatment");
    if (!std::isfinite(outcome[i]))
      throw ParseError(fmt::format("row {}: outcome is not finite", i + 1), i + 1, "outcome");

    auto [it, inserted] = index.try_emplace(cluster_labels[i], ds.clusters.size());
    if (inserted) {
      ClusterRecord c;
      c.cluster_id = it->second;
      c.label = cluster_labels[i];
      c.cluster_covariates.assign(cluster_covariates.row(row).begin(), cluster_covariates.row(row).end());
      ds.clusters.push_back(std::move(c));
    } else {
      const auto& z = ds.clusters[it->second].cluster_covariates;
      for (Eigen::Index j = 0; j < cluster_covariates.cols(); ++j)
        if (z[j] != cluster_covariates(row, j))
          throw ConsistencyError(fmt::format("cluster {}: cluster covariate '{}' varies within the cluster ({} vs {})",
                                             cluster_labels[i], ds.cluster_covariate_names[j], z[j],
                                             cluster_covariates(row, j)));
    }
    ds.clusters[it->second].member_units.push_back(i);

    UnitRecord u;
    u.unit_id = i;
    u.cluster_id = it->second;
    u.treatment = treatment[i];
    u.outcome = outcome[i];
    u.unit_covariates.assign(unit_covariates.row(row).begin(), unit_covariates.row(row).end());
    ds.units.push_back(std::move(u));
  }
  return ds;
}

ValidationReport validate(const Dataset& ds) {
  ValidationReport report;
  auto& v = report.violations;

  std::vector<int> seen(ds.units.size(), 0);
  std::size_t total = 0;
  for (std::size_t r = 0; r < ds.clusters.size(); ++r) {
    const auto& c = ds.clusters[r];
    if (c.member_units.empty()) v.push_back(fmt::format("cluster {} has no member units", c.label));
    if (c.cluster_covariates.size() != ds.n_cluster_covariates())
      v.push_back(fmt::format("cluster {} has {} cluster covariates, expected {}", c.label,
                              c.cluster_covariates.size(), ds.n_cluster_covariates()));
    total += c.member_units.size();
    for (auto i : c.member_units) {
      if (i >= ds.units.size()) {
        v.push_back(fmt::format("cluster {} references unknown unit {}", c.label, i));
        continue;
      }
      ++seen[i];
      if (ds.units[i].cluster_id != r)
        v.push_back(fmt::format("unit {} is listed in cluster {} but points to cluster {}", i, c.label,
                                ds.units[i].cluster_id));
    }
  }
  if (total != ds.units.size())
    v.push_back(fmt::format("cluster sizes sum to {} but there are {} units", total, ds.units.size()));

  for (std::size_t i = 0; i < ds.units.size(); ++i) {
    const auto& u = ds.units[i];
    if (u.unit_id != i) v.push_back(fmt::format("unit at position {} has unit_id {}", i, u.unit_id));
    if (seen[i] != 1) v.push_back(fmt::format("unit {} appears in {} clusters", i, seen[i]));
    if (u.cluster_id >= ds.clusters.size()) v.push_back(fmt::format("unit {} references unknown cluster", i));
    if (u.treatment != 0 && u.treatment != 1) v.push_back(fmt::format("unit {} has treatment {}", i, u.treatment));
    if (!std::isfinite(u.outcome)) v.push_back(fmt::format("unit {} has a non-finite outcome", i));
    if (u.unit_covariates.size() != ds.n_unit_covariates())
      v.push_back(fmt::format("unit {} has {} unit covariates, expected {}", i, u.unit_covariates.size(),
                              ds.n_unit_covariates()));
  }

  if (ds.treatment_level == TreatmentLevel::ClusterLevel) {
    for (const auto& c : ds.clusters) {
      bool has0 = false, has1 = false;
      for (auto i : c.member_units)
        if (i < ds.units.size()) (ds.units[i].treatment == 1 ? has1 : has0) = true;
      if (has0 && has1) v.push_back(fmt::format("cluster {} mixes treated and control units", c.label));
    }
  }

  const auto n1 = ds.n_treated();
  if (n1 == 0) v.push_back("empty treated arm");
  if (n1 == ds.units.size()) v.push_back("empty control arm");
  return report;
}

void require_valid(const Dataset& ds) {
  const auto report = validate(ds);
  if (report.ok()) return;
  std::string msg = "invalid dataset:";
  for (const auto& s : report.violations) msg += "\n  " + s;
  throw Error(msg);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  if (cell.empty()) throw ParseError(fmt::format("row {}, column '{}': missing value", row, column), row, column);
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ParseError(fmt::format("row {}, column '{}': '{}' is not a finite number", row, column, cell), row, column);
  return value;
}

}  // namespace

Dataset ingest_dataset(std::istream& in, const Schema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("input is empty (expected a header row)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    throw SchemaError(fmt::format("missing column '{}'", name));
  };
  const auto y_col = column(schema.outcome);
  const auto a_col = column(schema.treatment);
  const auto c_col = column(schema.cluster);
  std::vector<std::size_t> x_cols, z_cols;
  for (const auto& n : schema.unit_covariates) x_cols.push_back(column(n));
  for (const auto& n : schema.cluster_covariates) z_cols.push_back(column(n));

  std::vector<std::string> labels;
  std::vector<int> treatment;
  std::vector<double> outcome;
  std::vector<std::vector<double>> xs, zs;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto cells = split_csv_line(line);
    for (auto& c : cells) c = trim(c);
    if (cells.size() != header.size())
      throw ParseError(fmt::format("row {}: expected {} cells, found {}", row, header.size(), cells.size()), row, "");

    if (cells[c_col].empty())
      throw ParseError(fmt::format("row {}, column '{}': missing value", row, schema.cluster), row, schema.cluster);
    labels.push_back(cells[c_col]);

    const double a = parse_number(cells[a_col], row, schema.treatment);
    if (a != 0.0 && a != 1.0)
      throw ParseError(fmt::format("row {}, column '{}': treatment must be 0 or 1, got '{}'", row, schema.treatment,
                                   cells[a_col]),
                       row, schema.treatment);
    treatment.push_back(static_cast<int>(a));
    outcome.push_back(parse_number(cells[y_col], row, schema.outcome));

    std::vector<double> x, z;
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      x.push_back(parse_number(cells[x_cols[k]], row, schema.unit_covariates[k]));
    for (std::size_t k = 0; k < z_cols.size(); ++k)
      z.push_back(parse_number(cells[z_cols[k]], row, schema.cluster_covariates[k]));
    xs.push_back(std::move(x));
    zs.push_back(std::move(z));
  }
  if (row == 0) throw SchemaError("input has a header but no data rows");

  Eigen::MatrixXd xm(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(x_cols.size()));
  Eigen::MatrixXd zm(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(z_cols.size()));
  for (std::size_t i = 0; i < row; ++i) {
    for (std::size_t k = 0; k < x_cols.size(); ++k) xm(i, k) = xs[i][k];
    for (std::size_t k = 0; k < z_cols.size(); ++k) zm(i, k) = zs[i][k];
  }
  return make_dataset(labels, treatment, outcome, xm, zm, schema.level, schema.unit_covariates,
                      schema.cluster_covariates);
}

Dataset ingest_dataset(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot open '{}'", path.string()));
  return ingest_dataset(in, schema);
}

void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  out << "cluster,treatment,outcome";
  for (const auto& n : ds.unit_covariate_names) out << ',' << n;
  for (const auto& n : ds.cluster_covariate_names) out << ',' << n;
  out << '\n';
  for (const auto& u : ds.units) {
    out << ds.clusters[u.cluster_id].label << ',' << u.treatment << ',' << fmt::format("{}", u.outcome);
    for (double x : u.unit_covariates) out << ',' << fmt::format("{}", x);
    for (double z : ds.clusters[u.cluster_id].cluster_covariates) out << ',' << fmt::format("{}", z);
    out << '\n';
  }
}

}  // namespace clustermatch
