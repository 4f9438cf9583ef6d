#ifndef AMP_LAB_ERRORS_HPP
#define AMP_LAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace amp_lab {

// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: bad parameters, malformed files, inconsistent configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A scalar function was evaluated outside its domain.
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Combinatorial routines refuse inputs beyond their enumeration cap.
class SizeLimitError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Quadrature, root finding or a decomposition failed to reach its tolerance.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

// An iterate became non-finite.
class DivergenceError : public NumericalFailure {
 public:
  DivergenceError(const std::string& what, int iteration)
      : NumericalFailure(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

// The requested operation has no meaning for this algorithm variant.
class UnsupportedVariant : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace amp_lab

#endif
