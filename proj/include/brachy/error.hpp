#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace brachy {

/// Base for every error raised by the engine. `kind()` is a stable
/// machine-readable tag used by the CLI and the HTTP API.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Caller supplied something malformed or out of range.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error("input", what) {}
};

/// Quaternion not unit length within tolerance.
class InvalidRotation : public Error {
 public:
  explicit InvalidRotation(const std::string& what)
      : Error("invalid-rotation", what) {}
};

/// Point configuration does not determine a unique rigid transform.
class DegenerateConfiguration : public Error {
 public:
  explicit DegenerateConfiguration(const std::string& what)
      : Error("degenerate-configuration", what) {}
};

/// File contents could not be parsed. `offset()` is a byte offset for
/// binary formats or a 1-based line number for text formats.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset, bool is_line = false)
      : Error("parse",
              what + (is_line ? " (line " : " (byte ") + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Well-formed file using a feature outside the supported subset.
class UnsupportedFormat : public Error {
 public:
  UnsupportedFormat(const std::string& field, const std::string& what)
      : Error("unsupported-format", field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Plan or document schema mismatch (wrong version, unknown field).
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error("schema", what) {}
};

/// Command issued before its prerequisites exist.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, bool input_fault = false)
      : Error("stage", stage + ": " + what),
        stage_(std::move(stage)),
        input_fault_(input_fault) {}
  const std::string& stage() const noexcept { return stage_; }
  /// True when the underlying cause is bad caller input rather than a
  /// numerical or ordering failure.
  bool input_fault() const noexcept { return input_fault_; }

 private:
  std::string stage_;
  bool input_fault_;
};

/// Optimistic-concurrency revision mismatch.
class ConflictError : public Error {
 public:
  ConflictError(const std::string& what, long current)
      : Error("conflict", what), current_(current) {}
  long current_revision() const noexcept { return current_; }

 private:
  long current_;
};

}  // namespace brachy
