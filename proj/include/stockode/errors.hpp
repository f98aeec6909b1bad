#pragma once

#include <stdexcept>
#include <string>

namespace stockode {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape / dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// API preconditions violated by the caller (non-scalar backward, shuffled
// splits, ...).
struct ContractError : Error {
  using Error::Error;
};

// A model function re-evaluated under gradcheck produced different values.
struct DeterminismError : ContractError {
  using ContractError::ContractError;
};

// Bad values inside otherwise well-formed data (non-positive close, ...).
struct DataError : Error {
  using Error::Error;
};

// Malformed file content.
struct ParseError : Error {
  using Error::Error;
};

// Invalid configuration or command usage.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite intermediates, failed numeric checks.
struct NumericError : Error {
  using Error::Error;
};

// Argument outside its documented range.
struct RangeError : Error {
  using Error::Error;
};

}  // namespace stockode
