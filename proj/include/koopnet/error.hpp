#pragma once

#include <stdexcept>
#include <string>

namespace koopnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Layer dimension list cannot describe a network.
class ArchitectureError : public Error {
 public:
  using Error::Error;
};

/// A forward cache does not belong to the network or batch it is used with.
class CacheError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, gradient or rollout state.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Input outside the domain of a function (non-finite state, bad argument).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite state encountered while integrating an ODE.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// A rejection sampler exceeded its resample cap.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration (loss horizon vs trajectory length, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace koopnet
