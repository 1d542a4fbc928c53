#pragma once

#include <stdexcept>

namespace quenchmc {

// Problem size exceeds an enumeration or propagation cap.
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numerical routine failed to reach its requested accuracy.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A divergence is undefined on the given pair of distributions.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced non-finite losses or gradients.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File or stream could not be read or written as expected.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace quenchmc
