#pragma once

#include <stdexcept>
#include <string>

namespace nfgp {

// Error categories. The CLI maps each one onto a distinct exit code.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch between operands (autodiff primitives, network inputs).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse, e.g. calling backward on a non-scalar node.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace nfgp
