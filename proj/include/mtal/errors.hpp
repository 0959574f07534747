#pragma once

#include <stdexcept>
#include <string>

namespace mtal {

// Tensor extents disagree with what an operation requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A kernel with zero L2 norm has no direction, so cosine similarity is undefined.
class DegenerateKernelError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// On-disk data (datasets, checkpoints) does not match its documented layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment or model configuration; the message names the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss or gradient became NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mtal
