#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace nclab {

// Root of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (non-positive counts, fractions out of range, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A violated precondition between arguments, e.g. statistics computed from a
// different feature batch.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A population that has to be nonempty is empty.
class EmptyPopulationError : public Error {
 public:
  using Error::Error;
};

// A quantity is undefined for the given input (zero norms, single-valued
// targets, missing classes).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::optional<std::size_t> line() const { return line_; }

 private:
  std::optional<std::size_t> line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values in inputs or during training. Epoch/batch are set when
// the failure happened inside a training loop (1-based epoch, 0-based batch).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what) {}
  NumericError(const std::string& what, std::size_t epoch, std::size_t batch)
      : Error(what + " (epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch) + ")"),
        epoch_(epoch),
        batch_(batch) {}

  std::optional<std::size_t> epoch() const { return epoch_; }
  std::optional<std::size_t> batch() const { return batch_; }

 private:
  std::optional<std::size_t> epoch_;
  std::optional<std::size_t> batch_;
};

}  // namespace nclab
