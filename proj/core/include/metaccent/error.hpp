#pragma once

#include <stdexcept>
#include <string>

namespace metaccent {

// Root of the library's error taxonomy. Every message is expected to start
// with "<module>.<operation>:" so CLI output names the failing component.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor rank/extent mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values fed to an operation that requires finite input.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Index outside a valid range (vocabulary ids, embedding rows, ...).
class IndexError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. running backward twice on the same tape.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Two parameter stores (or a store and a checkpoint) disagree on names
// or shapes.
class CongruenceError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input too short / sequence too long for the requested operation.
class LengthError : public Error {
 public:
  using Error::Error;
};

// Malformed or semantically invalid data (manifest rows, wav payloads,
// empty targets).
class DataError : public Error {
 public:
  using Error::Error;
};

// Filesystem / stream failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// An evaluation or adaptation protocol cannot proceed as requested
// (empty reference, empty k-shot selection).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Training loss became non-finite. Carries the step at which it happened.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, int step) : Error(msg), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace metaccent
