#ifndef ADVLM_ERROR_HPP_
#define ADVLM_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace advlm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments, shapes or configuration values.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A model returned something that violates the DifferentiableModel contract
// (non-finite loss, wrong gradient shape, dead endpoint).
class ModelError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Parse/validation failure tied to a position in a line-oriented file.
class FormatError : public Error {
 public:
  FormatError(std::string path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

}  // namespace advlm

#endif  // ADVLM_ERROR_HPP_
