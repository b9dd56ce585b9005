#pragma once

#include <stdexcept>
#include <string>

namespace wearfuse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape disagreement; message carries both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input outside an operation's documented numeric domain (e.g. log of a
// non-positive value).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Bad configuration or usage. CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data. CLI maps this to exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or divergence detected. CLI maps this to exit code 4.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace wearfuse
