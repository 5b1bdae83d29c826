#pragma once

#include <stdexcept>
#include <string>

namespace ifem {

/// Base class for all library failures. The CLI maps the subclasses to exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid input parameters (mesh size, tolerances, coefficient values, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Interface/mesh configuration the discretization cannot handle.
class GeometryError : public Error {
public:
  GeometryError(const std::string& what, int triangle = -1)
      : Error(triangle >= 0 ? what + " (triangle " + std::to_string(triangle) + ")" : what),
        triangle_(triangle) {}

  /// Offending triangle id, or -1 when the failure is not local to one triangle.
  int triangle() const noexcept { return triangle_; }

private:
  int triangle_;
};

/// Linear solver breakdown or non-convergence.
class SolverError : public Error {
public:
  SolverError(const std::string& what, double residual = -1.0)
      : Error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

}  // namespace ifem
