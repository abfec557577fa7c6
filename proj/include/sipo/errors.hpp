#pragma once

#include <stdexcept>
#include <string>

namespace sipo {

/// Base for every error raised by the library. Callers that only need to
/// report and move on can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad caller input: malformed files, out-of-range counts, invalid config.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Argument outside a model's validity domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Sensor value outside the range a model can invert.
class RangeError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class OrderingError : public Error {
 public:
  using Error::Error;
};

class EncodeError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace sipo
