#pragma once

#include <stdexcept>
#include <string>

namespace csapo {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidPolicyError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class InfeasibleSpecError : public Error {
 public:
  using Error::Error;
};

class InfeasibleBudgetError : public Error {
 public:
  using Error::Error;
};

class ContractViolationError : public Error {
 public:
  using Error::Error;
};

class DivergedDualsError : public Error {
 public:
  using Error::Error;
};

class UnavailableError : public Error {
 public:
  using Error::Error;
};

class NonConvergedError : public Error {
 public:
  NonConvergedError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace csapo
