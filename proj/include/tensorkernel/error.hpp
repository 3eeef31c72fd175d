#pragma once

#include <stdexcept>
#include <string>

namespace tk {

/// Coarse error category, used by the CLI to choose an exit code.
enum class ErrorKind {
  invalid_argument,
  invalid_order,
  capacity,
  bounds,
  shape,
  range,
  numeric,
  parse,
  io,
  unsupported,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define TK_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(Kind, what) {}   \
  };

TK_DEFINE_ERROR(InvalidArgumentError, ErrorKind::invalid_argument)
TK_DEFINE_ERROR(InvalidOrderError, ErrorKind::invalid_order)
TK_DEFINE_ERROR(CapacityError, ErrorKind::capacity)
TK_DEFINE_ERROR(BoundsError, ErrorKind::bounds)
TK_DEFINE_ERROR(ShapeError, ErrorKind::shape)
TK_DEFINE_ERROR(RangeError, ErrorKind::range)
TK_DEFINE_ERROR(NumericError, ErrorKind::numeric)
TK_DEFINE_ERROR(UnsupportedError, ErrorKind::unsupported)
TK_DEFINE_ERROR(IoError, ErrorKind::io)

#undef TK_DEFINE_ERROR

/// Parse failure; carries the 1-based line number when one applies (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(ErrorKind::parse,
              line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace tk
