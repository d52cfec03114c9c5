#pragma once

#include <stdexcept>
#include <string>

namespace diffret {

// Base class for all typed errors raised by the library. The CLI maps any
// Error subclass to exit code 1; everything else is a bug.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes do not line up (matmul inner dims, broadcast, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An API precondition was violated (non-scalar loss, index out of range, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (K=0, eval_steps > K, negative temperature, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid runtime input (empty corpus, empty gallery, unknown query id, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced where finiteness is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File format / persistence failures (bad magic, truncation, version skew).
class IoError : public Error {
 public:
  using Error::Error;
};

// Rate-limited warning sink (zero-norm token clamps and similar guards).
void log_warning(const std::string& msg);

}  // namespace diffret
