#pragma once

#include <stdexcept>
#include <string>

namespace fortattack {

// Error classes map 1:1 onto CLI exit codes (see tools/fortattack.cpp).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (bad field, impossible geometry, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Tensor / layer shape mismatch.
struct DimensionError : Error {
  using Error::Error;
};

// API contract violation (loss not on tape, action for a dead agent, ...).
struct UsageError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required (poisoned update, bad loss).
struct NumericError : Error {
  using Error::Error;
};

// File system / serialization failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace fortattack
