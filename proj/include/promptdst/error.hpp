#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace promptdst {

// Coarse error classes; the C API maps each one onto a status code.
enum class ErrorKind {
  invalid_argument,
  parse,
  ontology,
  range,
  lookup,
  backend,
  data,
  io,
  numeric,
  config,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Same kind, message prefixed with "<context>: ".
  Error with_context(std::string_view context) const {
    return Error(kind_, std::string(context) + ": " + what());
  }

 private:
  ErrorKind kind_;
};

}  // namespace promptdst
