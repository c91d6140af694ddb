#pragma once

#include <stdexcept>
#include <string>

namespace cosub {

// Every failure raised by the core library carries one of these kinds. The C
// boundary maps them onto stable status codes.
enum class ErrorKind {
  Parameter,   // argument outside its declared range
  Schema,      // CSV/config structure does not match expectations
  Parse,       // a value could not be parsed
  Domain,      // a parsed value violates a domain rule (e.g. treatment not in {0,1})
  Fit,         // a model cannot be fit on the given data
  Numerical,   // non-finite quantity or degenerate arithmetic
  Io,          // file system failure
  Diagnostic,  // a diagnostic is undefined for this input (non-fatal in pipelines)
  Collapse,    // soft group size vanished
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Fit: return "fit error";
    case ErrorKind::Numerical: return "numerical error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Diagnostic: return "diagnostic error";
    case ErrorKind::Collapse: return "collapse";
  }
  return "error";
}

}  // namespace cosub
