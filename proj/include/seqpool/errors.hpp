#pragma once

#include <stdexcept>
#include <string>

namespace seqpool {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape or dimensionality mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

/// Argument outside its mathematical domain (empty sequence, bad probability, ...).
struct DomainError : Error {
  using Error::Error;
};

/// Malformed file content or directory layout.
struct FormatError : Error {
  using Error::Error;
};

/// Inconsistent or unusable configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// Filesystem failure.
struct IoError : Error {
  using Error::Error;
};

/// Training produced a non-finite loss.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace seqpool
