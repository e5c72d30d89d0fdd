#pragma once

#include <stdexcept>
#include <string>

namespace han {

// Incompatible shapes or geometry handed to an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad configuration or arguments supplied by a caller (maps to CLI exit 2).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss or value became non-finite (maps to CLI exit 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system or decode failure (maps to CLI exit 4).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace han
