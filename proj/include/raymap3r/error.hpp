#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace raymap3r {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs whose dimensions or lengths disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A closed-form estimate whose input configuration does not identify a unique solution.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. `line()` is 1-based, 0 when the error is not tied to a line.
class ParseError : public Error {
 public:
  ParseError(std::string path, std::size_t line, const std::string& what)
      : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

/// A file that cannot be opened, created or decoded at the container level.
class IoError : public Error {
 public:
  IoError(std::string path, const std::string& what) : Error(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Configuration value outside its documented domain.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& constraint)
      : Error("config key '" + key + "' violates: " + constraint), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace raymap3r
