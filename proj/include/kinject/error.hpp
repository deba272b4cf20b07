#pragma once

#include <stdexcept>
#include <string>

namespace kinject {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file (triples, frequencies, checkpoints, configs).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Bad dataset contents (labels, empty splits, empty sentences).
class DataError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Violated ordering or range contracts between pipeline stages.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace kinject
