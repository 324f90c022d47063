#pragma once

#include <stdexcept>
#include <string>

namespace vcfp {

// Invariant or configuration violation in user-supplied data. Maps to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File could not be opened, read or written. Maps to exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vcfp
