#pragma once

#include <stdexcept>
#include <string>

namespace memedit {

/// Broad failure classes. The CLI maps each one to its own exit code.
enum class ErrorKind {
  io,          // file could not be opened, read or written
  format,      // bytes or text do not follow the expected layout
  validation,  // precondition or invariant violated by the caller
  degenerate,  // data is well formed but the problem is ill posed
  numeric,     // optimizer diverged or a decomposition failed
  scorer,      // external scoring subprocess failed
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::validation: return "validation";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::scorer: return "scorer";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::validation, what);
}

}  // namespace memedit
