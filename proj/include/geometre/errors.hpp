#pragma once

#include <stdexcept>
#include <string>

namespace geometre {

// Base of every error the library throws. The CLI maps the concrete type to
// an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad corners, dimension mismatch, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed query record or config line.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Dataset files that load but violate an invariant (ids, inclusions).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class UnsupportedQuery : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Not enough embedding dimensions for the requested transitive relations.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf reached the loss or a gradient block during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace geometre
