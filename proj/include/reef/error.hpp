#pragma once

#include <stdexcept>
#include <string>

namespace reef {

// Domain error raised by every module. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two matrices do not share a sample axis.
class IncomparableError : public Error {
 public:
  using Error::Error;
};

// Constant representation: self-HSIC is zero, or no positive RBF bandwidth exists.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace reef
