#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lutkan {

enum class ErrorKind {
  malformed_model,
  unsupported_version,
  input_shape,
  input_domain,
  compile,
  range,
  config,
  degenerate_metric,
  comparison,
  fit,
  io,
  usage,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; the kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace lutkan
