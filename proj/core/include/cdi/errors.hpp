#pragma once

#include <stdexcept>
#include <string>

namespace cdi {

// Malformed or inconsistent input data: bad file headers, dimension
// mismatches, invariant violations on user-supplied images.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (NaN loss, Inf activations).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad command-line or config usage.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cdi
