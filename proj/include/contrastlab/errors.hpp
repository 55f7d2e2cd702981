#pragma once

#include <stdexcept>
#include <string>

namespace contrastlab {

// Bad argument to a kernel or operation (zero-norm vector, index out of range, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configuration value fails validation or yields an unusable setup.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stored data contradicts itself (duplicate rows, non-increasing epochs).
class DataIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A text file could not be parsed. line() is 1-based; 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::string path)
      : std::runtime_error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace contrastlab
