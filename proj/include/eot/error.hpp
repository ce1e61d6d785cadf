#pragma once

#include <stdexcept>
#include <string>

namespace eot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad files, bad shapes, invalid arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value or violated an invariant
/// that should hold for optimal potentials.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace eot
