#pragma once

#include <stdexcept>
#include <string>

namespace rdsline {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A map violates membership in Homeo+(R).
class InvalidMap : public Error {
 public:
  using Error::Error;
};

/// A system fails normalization or contains an invalid map.
class InvalidSystem : public Error {
 public:
  using Error::Error;
};

/// Numeric inverse requested for a map that declares no way to bracket it.
class CannotBracketInverse : public Error {
 public:
  using Error::Error;
};

/// The evidence does not support any answer; carries the reason verbatim.
class Refusal : public Error {
 public:
  using Error::Error;
};

/// Fixed-point iteration hit its iteration cap.
class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A stationarity check needed a measure value in an infinite tail.
class WindowTooSmall : public Error {
 public:
  using Error::Error;
};

/// Configuration schema violation; message carries the path to the field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rdsline
