#pragma once

#include <stdexcept>
#include <string>

namespace svperturb {

// Numerical failures map to CLI exit code 2, usage problems to exit code 1.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteError : NumericError {
  using NumericError::NumericError;
};

struct NonSymmetricError : NumericError {
  using NumericError::NumericError;
};

struct NonUnitError : NumericError {
  using NumericError::NumericError;
};

struct DimensionMismatchError : NumericError {
  using NumericError::NumericError;
};

struct EmptySpectrumError : NumericError {
  using NumericError::NumericError;
};

struct EigenvalueOnContourError : NumericError {
  using NumericError::NumericError;
};

struct IndexOutOfRangeError : NumericError {
  using NumericError::NumericError;
};

struct MultiplicityNotOneError : NumericError {
  using NumericError::NumericError;
};

struct SpectrumTooLongError : NumericError {
  using NumericError::NumericError;
};

struct InsufficientReplicatesError : NumericError {
  using NumericError::NumericError;
};

struct DegenerateFitError : NumericError {
  using NumericError::NumericError;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace svperturb
