#pragma once

#include <stdexcept>
#include <string>

namespace omreg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// mu(x) > 0 while nu(x) == 0 for some x.
class AbsoluteContinuityViolated : public Error {
 public:
  using Error::Error;
};

/// A reward has (near) zero standard deviation under the base occupancy.
class DegenerateReward : public Error {
 public:
  using Error::Error;
};

class NonpositiveRatio : public Error {
 public:
  using Error::Error;
};

class RadiusSearchFailed : public Error {
 public:
  using Error::Error;
};

class CorrelationUnreachable : public Error {
 public:
  using Error::Error;
};

class StateSpaceTooLarge : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace omreg
