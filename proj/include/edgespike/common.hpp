#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace edgespike {

// Error hierarchy shared by all modules. ValidationError covers bad
// arguments and malformed configuration, ShapeError covers dimension
// mismatches, NumericError covers non-finite values and divergence.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace edgespike
