#pragma once

#include <stdexcept>
#include <string>

namespace privmarket {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Inputs violate a structural constraint (dimension mismatch, bad record).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A referenced user or coalition does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// A parameter is out of its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A submission or subset refers to users outside the coalition.
class MembershipError : public Error {
 public:
  using Error::Error;
};

/// Input text does not match the expected file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (missing or unknown keys, bad combinations).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace privmarket
