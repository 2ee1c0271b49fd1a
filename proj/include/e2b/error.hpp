#pragma once

#include <stdexcept>
#include <string>

namespace e2b {

enum class ErrorKind {
  schema,
  parse,
  size,
  shape,
  precondition,
  config,
  io,
  degenerate,
  rank,
  sparse_region,
  training,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema: return "schema error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::size: return "size error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::precondition: return "precondition error";
    case ErrorKind::config: return "config error";
    case ErrorKind::io: return "io error";
    case ErrorKind::degenerate: return "degenerate input";
    case ErrorKind::rank: return "rank error";
    case ErrorKind::sparse_region: return "sparse region";
    case ErrorKind::training: return "training error";
  }
  return "error";
}

// Numerical failures map to exit code 3, everything else (bad input,
// bad configuration) to exit code 2.
inline bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::degenerate || kind == ErrorKind::rank ||
         kind == ErrorKind::sparse_region || kind == ErrorKind::training;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace e2b
