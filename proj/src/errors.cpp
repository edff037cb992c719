#include "lam/errors.hpp"

namespace lam {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::contract: return "contract";
    case ErrorKind::config: return "config";
    case ErrorKind::range: return "range";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::data: return "data";
    case ErrorKind::format: return "format";
    case ErrorKind::magic: return "magic";
    case ErrorKind::version: return "version";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::shape: return "shape";
    case ErrorKind::analysis: return "analysis";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

void raise(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace lam
