// SPDX-License-Identifier: Apache-2.0
//
// Error types shared across the library. Every failure mode that callers
// are expected to distinguish gets its own exception type.

#pragma once

#include <stdexcept>
#include <string>

namespace thrlab {

class LabError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteLogit : public LabError {
 public:
  using LabError::LabError;
};

/// Zero reward variance in a group (all correct or all wrong).
class GroupDegenerate : public LabError {
 public:
  using LabError::LabError;
};

class KTooLarge : public LabError {
 public:
  using LabError::LabError;
};

class BadArity : public LabError {
 public:
  using LabError::LabError;
};

class NotPositiveResponse : public LabError {
 public:
  using LabError::LabError;
};

/// Dynamic sampling ran out of attempts before the batch was full.
class BatchStarvation : public LabError {
 public:
  BatchStarvation(const std::string& what, int step = -1)
      : LabError(what), step_(step) {}
  int step() const { return step_; }
  void set_step(int s) { step_ = s; }

 private:
  int step_;
};

class ZeroEntropyContext : public LabError {
 public:
  using LabError::LabError;
};

class DegenerateDistribution : public LabError {
 public:
  using LabError::LabError;
};

class ConfigError : public LabError {
 public:
  using LabError::LabError;
};

}  // namespace thrlab
