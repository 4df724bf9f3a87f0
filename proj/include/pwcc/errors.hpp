#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pwcc {

// Two families: ConfigError maps to CLI exit 2, DomainError to exit 1.
// `code` is a stable machine-readable tag (DimensionMismatch, QuadratureFailure, ...);
// `field` names the offending config key where that makes sense.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& msg, std::string field = {})
      : std::runtime_error(msg), code_(std::move(code)), field_(std::move(field)) {}

  const std::string& code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

private:
  std::string code_;
  std::string field_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

}  // namespace pwcc
