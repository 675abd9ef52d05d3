#pragma once

#include <stdexcept>
#include <string>

namespace slmm {

/// Base class for every error raised by the library. Callers that only want
/// to report a one-line diagnostic can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input data (corpus files, split specs, vocabularies).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or violated precondition on an argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses and similar failures during optimisation.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace slmm
