#pragma once

#include <stdexcept>
#include <string>

namespace kmv {

/// Violated precondition of a public operation (bad dimensions, out-of-range index, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A structural inequality that an input must satisfy does not hold
/// (exponent relations, ellipticity band, absorption hypothesis, ...).
class PreconditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The numerics themselves failed (non-finite state, CFL violation, refused budget).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EllipticityError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class CflError : public NumericalError {
 public:
  CflError(const std::string& what, double admissible_dt)
      : NumericalError(what), admissible_dt_(admissible_dt) {}
  double admissible_dt() const noexcept { return admissible_dt_; }

 private:
  double admissible_dt_;
};

class BudgetExceeded : public NumericalError {
 public:
  BudgetExceeded(const std::string& what, double estimated_cost)
      : NumericalError(what), estimated_cost_(estimated_cost) {}
  double estimated_cost() const noexcept { return estimated_cost_; }

 private:
  double estimated_cost_;
};

}  // namespace kmv
