// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PRDP_ERROR_H_
#define PRDP_ERROR_H_

#include <stdexcept>
#include <string>

namespace prdp {

// Shapes of operands (or bound inputs) disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A NaN or Inf showed up where only finite values are allowed.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration, bad key, or bad value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training diverged or otherwise could not complete.
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace prdp

#endif  // PRDP_ERROR_H_
