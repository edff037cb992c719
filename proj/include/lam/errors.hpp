#pragma once

#include <stdexcept>
#include <string>

namespace lam {

enum class ErrorKind {
  dimension,
  contract,
  config,
  range,
  numeric,
  data,
  format,
  magic,
  version,
  truncated,
  shape,
  analysis,
  io,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind; the
/// CLI prints it as the `error[<kind>]:` prefix.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

}  // namespace lam
