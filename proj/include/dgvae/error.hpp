#pragma once

#include <stdexcept>
#include <string>

namespace dgvae {

// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extent or shape disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf was produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied configuration or arguments. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read or written. The CLI maps this to exit code 1.
class IoError : public Error {
 public:
  using Error::Error;
};

// File contents are malformed, corrupt or of the wrong version.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace dgvae
