#pragma once

#include <stdexcept>
#include <string>

namespace fsn {

/// Invalid configuration or precondition on user-supplied parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or unreadable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Singular, indefinite or inconsistent linear algebra, or a corrupted
/// solver state.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fsn
