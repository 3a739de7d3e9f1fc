#pragma once

#include <stdexcept>
#include <string>

namespace uadf {

enum class ErrorCode {
  kInvalidParameter = 1,
  kInvalidInput = 2,
  kConfiguration = 3,
  kProviderIo = 4,
  kParse = 5,
  kSchema = 6,
  kIo = 7,
};

// Every failure raised by the library carries one of the codes above; the C
// boundary maps them onto uadf_status values one to one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace uadf
