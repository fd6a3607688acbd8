#pragma once

#include <stdexcept>
#include <string>

namespace w2c {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InvalidValue : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class ConfigMismatch : public Error {
  public:
    using Error::Error;
};

class TemplateError : public Error {
  public:
    using Error::Error;
};

// Backend failures.

class TransportError : public Error {
  public:
    using Error::Error;
};

class ContractError : public Error {
  public:
    using Error::Error;
};

class ReplayMiss : public Error {
  public:
    explicit ReplayMiss(std::string key)
        : Error("no replay entry for request key " + key), key_(std::move(key)) {}

    [[nodiscard]] const std::string& key() const { return key_; }

  private:
    std::string key_;
};

// Stage and consistency failures.

class EmptyGeneration : public Error {
  public:
    using Error::Error;
};

class EmptyInput : public Error {
  public:
    using Error::Error;
};

class MissingVerdict : public Error {
  public:
    using Error::Error;
};

// Code format failures.

class SanitizationCollapse : public Error {
  public:
    using Error::Error;
};

class CodeSyntaxError : public Error {
  public:
    CodeSyntaxError(const std::string& message, int line, int column)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                message),
          line_(line), column_(column) {}

    [[nodiscard]] int line() const { return line_; }
    [[nodiscard]] int column() const { return column_; }

  private:
    int line_;
    int column_;
};

class SchemaError : public Error {
  public:
    using Error::Error;
};

} // namespace w2c
