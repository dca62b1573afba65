#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace plnpca {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape mismatch or violated call contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (CSV cell, config value, ...).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Non-finite Poisson rate during synthetic data generation.
class SimulationError : public Error {
 public:
  SimulationError(const std::string& msg, std::size_t individual, std::size_t variable)
      : Error(msg), individual(individual), variable(variable) {}
  std::size_t individual;
  std::size_t variable;
};

/// Every importance weight of an individual vanished.
class DegenerateWeightsError : public Error {
 public:
  DegenerateWeightsError(const std::string& msg, std::size_t individual)
      : Error(msg), individual(individual) {}
  std::size_t individual;
};

/// Proposal adaptation failed (non-finite moments, nonpositive variance).
class AdaptationError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver did not reach its tolerance; carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, std::vector<double> last)
      : Error(msg), last_iterate(std::move(last)) {}
  std::vector<double> last_iterate;
};

/// Optimizer or VEM run aborted.
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace plnpca
