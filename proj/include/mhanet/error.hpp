#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace mhanet {

enum class ErrorKind {
  Usage,
  Config,
  Data,
  Numerical,
  Dimension,
  Format,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library. The kind maps one-to-one onto the
/// status codes of the C API.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(ErrorKind kind, Args&&... args) {
  throw Error(kind, concat(std::forward<Args>(args)...));
}

}  // namespace mhanet
