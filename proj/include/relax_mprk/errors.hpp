#pragma once

#include <stdexcept>
#include <string>

namespace relax_mprk {

/// A state or argument left the positive orthant (or another admissible domain).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Scheme parameters violate the admissible region of the family.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested combination is outside what the scheme implements.
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Time integration gave up (step size underflow, step budget exhausted).
class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace relax_mprk
