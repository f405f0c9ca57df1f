#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace imix {

enum class ErrorKind {
  kParse,
  kConflict,
  kValidation,
  kInvalidArgument,
  kConfiguration,
  kRender,
  kContract,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

// Warnings go to a process-wide sink (stderr by default). Tests swap it out.
using WarningSink = void (*)(std::string_view message, void* user);
void set_warning_sink(WarningSink sink, void* user);
void warn(std::string_view message);

}  // namespace imix
