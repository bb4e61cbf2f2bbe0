#pragma once

#include <stdexcept>
#include <string>

namespace stabcheck {

enum class ErrorKind {
  Syntax,
  UnknownBlockKind,
  DuplicateBlock,
  DanglingEdge,
  EmptyModel,
  AlgebraicLoop,
  Dimension,
  Numeric,
  Marginal,
  InvalidArgument,
  MissingSignal,
  EmptyWindow,
  Resource,
  Io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Syntax: return "syntax";
    case ErrorKind::UnknownBlockKind: return "unknown-block-kind";
    case ErrorKind::DuplicateBlock: return "duplicate-block";
    case ErrorKind::DanglingEdge: return "dangling-edge";
    case ErrorKind::EmptyModel: return "empty-model";
    case ErrorKind::AlgebraicLoop: return "algebraic-loop";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Marginal: return "marginal";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::MissingSignal: return "missing-signal";
    case ErrorKind::EmptyWindow: return "empty-window";
    case ErrorKind::Resource: return "resource";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library. Parse failures carry a 1-based
/// line/column; other kinds leave them at zero.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, int line = 0, int column = 0)
      : std::runtime_error(format(kind, what, line, column)),
        kind_(kind),
        line_(line),
        column_(column),
        message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  const std::string& message() const noexcept { return message_; }

 private:
  static std::string format(ErrorKind kind, const std::string& what, int line, int column) {
    std::string s = to_string(kind);
    if (line > 0) s += " at " + std::to_string(line) + ":" + std::to_string(column);
    return s + ": " + what;
  }

  ErrorKind kind_;
  int line_;
  int column_;
  std::string message_;
};

}  // namespace stabcheck
