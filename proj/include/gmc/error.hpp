#pragma once

#include <stdexcept>
#include <string>

namespace gmc {

// Every failure raised by the library derives from Error so callers (the CLI in
// particular) can map categories to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A layer was applied out of order.
class SequencingError : public Error {
 public:
  using Error::Error;
};

class SynthesisFailure : public Error {
 public:
  using Error::Error;
};

class CorruptField : public Error {
 public:
  using Error::Error;
};

// Snapshot / mask / table file could not be decoded.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Requested box size is finer than the lattice can resolve.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

class DegenerateSample : public Error {
 public:
  using Error::Error;
};

class InsufficientScales : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace gmc
