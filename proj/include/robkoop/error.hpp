#pragma once

#include <stdexcept>
#include <string>

namespace robkoop {

/// Base class for all library failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: wrong shapes, out-of-range parameters, malformed files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (divergence, non-convergence, singular solve).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace robkoop
