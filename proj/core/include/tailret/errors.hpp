#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tailret {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input record; line is 1-based, 0 when not line oriented.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input for which the requested quantity is undefined (e.g. a zero embedding
// in a denominator).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& artifact, const std::string& subcommand)
      : Error("missing artifact '" + artifact + "'; run '" + subcommand + "' first"),
        subcommand_(subcommand) {}
  const std::string& subcommand() const { return subcommand_; }

 private:
  std::string subcommand_;
};

// Non-finite loss during an optimisation loop.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

}  // namespace tailret
