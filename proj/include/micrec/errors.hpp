#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace micrec {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or missing configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unusable input data. The CLI maps this to exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// All entities were removed by rating/degree filtering.
class EmptyDomainError : public DataError {
 public:
  using DataError::DataError;
};

/// A feature file does not cover every entity of the domain.
class IncompleteFeaturesError : public DataError {
 public:
  IncompleteFeaturesError(const std::string& source, std::vector<std::int64_t> missing);
  const std::vector<std::int64_t>& missing_ids() const { return missing_; }

 private:
  std::vector<std::int64_t> missing_;
};

/// A feature file contains a non-finite value.
class InvalidFeatureError : public DataError {
 public:
  using DataError::DataError;
};

/// Checkpoint version or population does not match the data it is used with.
class VersionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Training produced a non-finite loss. The CLI maps this to exit code 4.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string dump)
      : Error(what), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

}  // namespace micrec
