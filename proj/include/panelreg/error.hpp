#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace panelreg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data, schema, or configuration. The CLI maps it to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A model could not be fitted or applied. The CLI maps it to exit code 3.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Coordinate descent did not reach its tolerance within the sweep budget.
class ConvergenceError : public ModelError {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate, int sweeps)
      : ModelError(what), last_iterate_(std::move(last_iterate)), sweeps_(sweeps) {}

  const std::vector<double>& last_iterate() const { return last_iterate_; }
  int sweeps() const { return sweeps_; }

 private:
  std::vector<double> last_iterate_;
  int sweeps_;
};

}  // namespace panelreg
