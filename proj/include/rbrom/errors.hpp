#pragma once

#include <stdexcept>
#include <string>

namespace rbrom {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
  public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
  public:
    NotPositiveDefinite(std::size_t row, double pivot)
        : Error("matrix is not positive definite: non-positive pivot " + std::to_string(pivot) +
                " at row " + std::to_string(row)),
          row_(row) {}

    [[nodiscard]] std::size_t row() const noexcept { return row_; }

  private:
    std::size_t row_;
};

class SingularMatrix : public Error {
  public:
    using Error::Error;
};

class ConvergenceError : public Error {
  public:
    ConvergenceError(const std::string& what, double residual) : Error(what), residual_(residual) {}

    [[nodiscard]] double residual() const noexcept { return residual_; }

  private:
    double residual_;
};

/// Degenerate elements or invalid mesh descriptions.
class MeshError : public Error {
  public:
    using Error::Error;
};

/// Parameter or argument outside the admissible domain.
class DomainError : public Error {
  public:
    using Error::Error;
};

/// NaN or Inf produced where a finite value is required.
class NumericalError : public Error {
  public:
    using Error::Error;
};

class SolverError : public Error {
  public:
    using Error::Error;
};

class ArchiveError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class TrainingError : public Error {
  public:
    using Error::Error;
};

class CompatibilityError : public Error {
  public:
    using Error::Error;
};

} // namespace rbrom
