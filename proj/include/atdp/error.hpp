#pragma once

#include <stdexcept>
#include <string>

namespace atdp {

enum class ErrorKind {
  EmptyInput,
  IoError,
  ConfigError,
  AlignmentError,
  ConflictError,
  VocabError,
  NumericsError,
  EmptyBatch,
  UndefinedShare,
  OrderError,
  EmptyLedger,
  InvalidBound,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace atdp
