#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabdpo {

// Root of every error raised by the library. Callers that only need to
// report a failure can catch this and print what().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- table-core -------------------------------------------------------------

class DecodeError : public Error {
 public:
  using Error::Error;
};

class RaggedRowError : public Error {
 public:
  RaggedRowError(std::size_t row, std::size_t found, std::size_t expected)
      : Error("row " + std::to_string(row) + " has " + std::to_string(found) +
              " cells, header has " + std::to_string(expected)),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class EmptyTableError : public Error {
 public:
  EmptyTableError() : Error("table has no header") {}
  using Error::Error;
};

class InvalidTableError : public Error {
 public:
  using Error::Error;
};

class InvalidInstanceError : public Error {
 public:
  using Error::Error;
};

// --- render-text ------------------------------------------------------------

class MarkdownSyntaxError : public Error {
 public:
  MarkdownSyntaxError(std::size_t line, std::string reason)
      : Error("markdown line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(std::move(reason)) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

// --- render-image -----------------------------------------------------------

class OversizeError : public Error {
 public:
  OversizeError(int required_px, int max_px)
      : Error("table needs " + std::to_string(required_px) +
              " px at minimum font size, max_width_px is " + std::to_string(max_px)),
        required_px_(required_px) {}
  int required_px() const noexcept { return required_px_; }

 private:
  int required_px_;
};

class PngError : public Error {
 public:
  using Error::Error;
};

// --- model-client -----------------------------------------------------------

class EndpointError : public Error {
 public:
  EndpointError(int status, std::string body)
      : Error("endpoint returned status " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)) {}
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

class TemplateMissingError : public Error {
 public:
  using Error::Error;
};

class RepresentationMissingError : public Error {
 public:
  using Error::Error;
};

class DistributionError : public Error {
 public:
  using Error::Error;
};

// --- scoring / dpo ----------------------------------------------------------

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// --- pair-builder -----------------------------------------------------------

class NoNegativeError : public Error {
 public:
  using Error::Error;
};

// --- dataset-io / cli -------------------------------------------------------

class IoError : public Error {
 public:
  using Error::Error;
};

class DuplicateInstanceError : public Error {
 public:
  explicit DuplicateInstanceError(const std::string& id)
      : Error("duplicate instance id: " + id) {}
};

class SchemaVersionError : public Error {
 public:
  SchemaVersionError(std::string found, std::string supported)
      : Error("unsupported schema_version " + found + " (supported: " + supported + ")"),
        found_(std::move(found)) {}
  const std::string& found() const noexcept { return found_; }

 private:
  std::string found_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnknownInstanceError : public Error {
 public:
  explicit UnknownInstanceError(std::vector<std::string> ids)
      : Error(make_message(ids)), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  static std::string make_message(const std::vector<std::string>& ids) {
    std::string msg = "predictions reference unknown instances:";
    for (const auto& id : ids) msg += " " + id;
    return msg;
  }
  std::vector<std::string> ids_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace tabdpo
