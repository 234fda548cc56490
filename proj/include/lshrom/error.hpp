#pragma once

#include <stdexcept>
#include <string>

namespace lshrom {

/// Invalid input data, shapes or configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training or integration produced non-finite or divergent values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter outside the sampled range was requested.
class ExtrapolationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or incompatible file on disk.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lshrom
