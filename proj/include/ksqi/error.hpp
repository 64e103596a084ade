#pragma once

#include <stdexcept>
#include <string>

namespace ksqi {

/// Base for every error the toolkit raises. `kind()` feeds the CLI's
/// structured error output and exit-code mapping.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Malformed input document. Carries a 1-based line (0 when unknown) and a
/// field path such as `chunks[3].quality`.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::string field)
      : Error(format(message, line, field)), line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  static std::string format(const std::string& message, std::size_t line, const std::string& field) {
    std::string out = message;
    if (!field.empty()) out += " (field " + field + ")";
    if (line > 0) out += " at line " + std::to_string(line);
    return out;
  }

  std::size_t line_;
  std::string field_;
};

/// A well-formed value that breaks a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation"; }
};

/// Numerical routine could not produce a valid result.
class ComputationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "computation"; }
};

}  // namespace ksqi
