#pragma once

#include <stdexcept>
#include <string>

namespace rnntd {

// Malformed values: non-finite logits, out-of-range tokens, bad configs.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensors whose shapes do not agree with each other or with a target.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Work that would exceed a hard bound (path enumeration, byte counts).
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Non-finite gradients or losses encountered during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rnntd
