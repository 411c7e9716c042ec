#pragma once

#include <stdexcept>
#include <string>

namespace wavesched {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RangeError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

// Raised when an internal invariant is broken. The public scheduler path
// never triggers it; seeing one means a bug.
struct InvariantViolation : Error {
  using Error::Error;
};

struct EmptyQueryError : Error {
  using Error::Error;
};

struct UndefinedMetricError : Error {
  using Error::Error;
};

struct InsufficientTraceError : Error {
  using Error::Error;
};

struct TraceFormatError : Error {
  using Error::Error;
};

// External denoiser failures. Everything below ProtocolError maps to exit
// code 3 in the CLI.
struct ProtocolError : Error {
  using Error::Error;
};

struct SpawnError : ProtocolError {
  using ProtocolError::ProtocolError;
};

struct HandshakeTimeout : ProtocolError {
  using ProtocolError::ProtocolError;
};

struct VersionMismatch : ProtocolError {
  using ProtocolError::ProtocolError;
};

}  // namespace wavesched
