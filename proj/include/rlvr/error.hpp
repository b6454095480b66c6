#pragma once

#include <stdexcept>
#include <string>

namespace rlvr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-domain argument.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Malformed environment, optimizer or experiment configuration.
class InvalidConfig : public Error {
 public:
  using Error::Error;
};

/// Correct-set mass too small for conditional quantities to be meaningful.
class DegenerateMass : public Error {
 public:
  using Error::Error;
};

/// A policy update produced NaN/Inf logits. what() carries a state dump.
class NonFiniteUpdate : public Error {
 public:
  NonFiniteUpdate(const std::string& msg, long step = -1) : Error(msg), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Unknown preset, bad CLI arguments.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written. what() names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rlvr
