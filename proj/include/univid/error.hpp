#pragma once

#include <stdexcept>
#include <string>

namespace univid {

// Base of every error raised by the library. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range arguments: timesteps, schedule bounds, guidance weights.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Frame counts, step sizes or spatial sizes that do not divide evenly.
class DivisibilityError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace univid
