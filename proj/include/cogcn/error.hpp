#pragma once

#include <stdexcept>
#include <string>

namespace cogcn {

/// Broad failure class; the C API and CLI map these onto status/exit codes.
enum class ErrorKind {
  Usage,         // invalid arguments or configuration
  Data,          // malformed or inconsistent input data
  Io,            // filesystem failures
  Verification,  // a numeric self-check did not hold
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) { throw Error(ErrorKind::Usage, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(ErrorKind::Data, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorKind::Io, msg); }

}  // namespace cogcn
