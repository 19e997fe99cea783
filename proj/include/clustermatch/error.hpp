#pragma once

#include <stdexcept>
#include <string>

namespace clustermatch {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input table does not match the requested column roles.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A cell could not be parsed or is outside its domain. Carries 1-based
/// data row (header excluded) and the column name.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::string column)
      : Error(what), row_(row), column_(std::move(column)) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// Cluster-level columns vary within a cluster.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Matrix is numerically singular.
class SingularError : public Error {
 public:
  using Error::Error;
};

}  // namespace clustermatch
