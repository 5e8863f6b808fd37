#pragma once

#include <stdexcept>
#include <string>

namespace phaselock {

/// Base class for everything the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a precondition (shape mismatch, bad parameter, non-finite input).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The objective is undefined at the requested point: an estimated source has
/// no well-defined phase, the unmixing matrix is singular, or |u_j| sits on the
/// kink of the absolute value. Line searches treat this as a rejected step.
class DomainError : public Error {
 public:
  using Error::Error;
};

class AmplitudeFloorError : public DomainError {
 public:
  AmplitudeFloorError(const std::string& what, std::size_t row, std::size_t samples)
      : DomainError(what), row_(row), samples_(samples) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t offending_samples() const noexcept { return samples_; }

 private:
  std::size_t row_;
  std::size_t samples_;
};

class KinkError : public DomainError {
 public:
  KinkError(const std::string& what, std::size_t column) : DomainError(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class SingularMatrixError : public DomainError {
 public:
  using DomainError::DomainError;
};

}  // namespace phaselock
