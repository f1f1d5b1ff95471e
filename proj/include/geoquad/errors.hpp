#pragma once

#include <stdexcept>
#include <string>

namespace geoquad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented precondition (bad shape, non-orthonormal DCM, ...).
class InvalidArgument : public Error
{
public:
  using Error::Error;
};

/// The SE2(3)/SO(3) logarithm was requested at (or numerically near) a rotation of angle pi.
class LogSingularity : public Error
{
public:
  using Error::Error;
};

/// The thrust direction of a reference is ill defined (specific force too small).
class FeasibilityError : public Error
{
public:
  using Error::Error;
};

/// Bad experiment configuration. `key()` names the offending dotted path.
class ConfigError : public Error
{
public:
  ConfigError(std::string key, const std::string & what)
      : Error(key.empty() ? what : key + ": " + what), key_(std::move(key))
  {}

  const std::string & key() const noexcept { return key_; }

private:
  std::string key_;
};

/// Numerical breakdown inside a solver (singular system where one cannot occur).
class NumericalError : public Error
{
public:
  using Error::Error;
};

}  // namespace geoquad
