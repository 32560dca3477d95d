#pragma once

#include <stdexcept>
#include <string>

namespace ph {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record. `where` is "file:line" (or "<stream>:line").
class SchemaError : public Error {
 public:
  SchemaError(std::string where, std::string field, const std::string& what)
      : Error(where + ": field '" + field + "': " + what),
        where_(std::move(where)),
        field_(std::move(field)) {}

  const std::string& where() const noexcept { return where_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string where_;
  std::string field_;
};

/// A record points at an id that does not exist.
class ReferentialError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or an impossible request (maps to CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A prior pipeline stage has not produced the artifact this stage needs.
class MissingArtifactError : public ConfigError {
 public:
  MissingArtifactError(const std::string& path, const std::string& subcommand)
      : ConfigError("missing artifact " + path + "; run `ph " + subcommand + "` first"),
        subcommand_(subcommand) {}

  const std::string& subcommand() const noexcept { return subcommand_; }

 private:
  std::string subcommand_;
};

/// Remote endpoint failure after retries were exhausted (or a non-retryable status).
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status, std::string body)
      : Error(what), status_(status), body_(std::move(body)) {}

  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

}  // namespace ph
