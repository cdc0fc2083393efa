#pragma once

#include <stdexcept>
#include <string>

namespace lcz {

// Bad run configuration (unknown key, value out of range, missing input path).
// The CLI maps this to exit code 2.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or ill-formed data: containers, rasters, checkpoints, CSV inputs,
// and label/probability contract violations. CLI exit code 3.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape or operation contract violation. CLI exit code 3.
class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical verification failed: gradient check out of tolerance,
// non-deterministic function under test, NaN gradients. CLI exit code 4.
class verify_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lcz
