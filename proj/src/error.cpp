#include "lutkan/error.hpp"

namespace lutkan {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::malformed_model: return "malformed-model";
    case ErrorKind::unsupported_version: return "unsupported-version";
    case ErrorKind::input_shape: return "input-shape";
    case ErrorKind::input_domain: return "input-domain";
    case ErrorKind::compile: return "compile";
    case ErrorKind::range: return "range";
    case ErrorKind::config: return "config";
    case ErrorKind::degenerate_metric: return "degenerate-metric";
    case ErrorKind::comparison: return "comparison";
    case ErrorKind::fit: return "fit";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

}  // namespace lutkan
