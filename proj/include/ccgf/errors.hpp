#pragma once

#include <stdexcept>
#include <string>

namespace ccgf {

/// Base class of everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation called with arguments violating its preconditions.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Two potentials coincide identically (infinitely many crossing points).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Real energy sits on a channel eigenvalue with zero damping.
class PoleError : public Error {
 public:
  using Error::Error;
};

/// A backend failed to reach its requested tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// The coupled linear system is numerically singular at this energy.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

/// Too many grid points of a sweep had to be skipped.
class SweepError : public Error {
 public:
  using Error::Error;
};

/// Malformed or schema-violating run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure (unreadable input, unwritable output).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ccgf
