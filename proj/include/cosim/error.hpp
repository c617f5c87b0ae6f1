#pragma once

#include <stdexcept>
#include <string>

namespace cosim {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a numeric input is NaN or infinite.
class NonFiniteInput : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

}  // namespace cosim
