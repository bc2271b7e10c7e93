#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace contregime {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the support of a discrete conditional law.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The intervention is not absolutely continuous against the observed
/// treatment law, so a density ratio (and any weight built from it) does not
/// exist.
class PositivityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class ResourceError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The requested functional is not defined for this regime class.
class ScopeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace contregime
