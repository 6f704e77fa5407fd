#pragma once

#include <stdexcept>
#include <string>

namespace replan {

enum class ErrorCode {
  kInvalidArgument = 1,
  kBounds,
  kStaleMap,
  kDomain,
  kIo,
  kParse,
  kGeneration,
  kInfeasible,
  kNumerical,
  kConfig,
};

const char* to_string(ErrorCode code);

// Every failure raised by the core library carries one of the codes above so
// the C boundary can map it to a status value without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace replan
