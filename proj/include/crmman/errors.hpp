#pragma once

#include <stdexcept>
#include <string>

namespace crmman {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is out of range or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The API was called in a way its contract forbids.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Input data failed validation (too many malformed lines, unknown ids).
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined on the given input (e.g. single-class AUC).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Training diverged.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace crmman
