#pragma once

#include <stdexcept>
#include <string>

namespace arhq {

// Base of every error the library throws. The CLI maps ConfigError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not line up (non-square input, column mismatch, empty tensor).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite entries or otherwise unusable numeric data.
class DataError : public Error {
 public:
  using Error::Error;
};

// A scalar argument outside its documented range (rank, floor, bits, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed tensor file or archive.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Schema violation in a JSON config or a bad command-line override.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// finalize() on an accumulator that never saw a calibration row.
class EmptyCalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace arhq
