#include "instructmix/error.hpp"

#include <cstdio>

namespace imix {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kConfiguration: return "configuration error";
    case ErrorKind::kRender: return "render error";
    case ErrorKind::kContract: return "contract violation";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(to_string(kind)) + ": " + message);
}

namespace {

void stderr_sink(std::string_view message, void*) {
  std::fprintf(stderr, "warning: %.*s\n", static_cast<int>(message.size()), message.data());
}

WarningSink g_sink = &stderr_sink;
void* g_sink_user = nullptr;

}  // namespace

void set_warning_sink(WarningSink sink, void* user) {
  g_sink = sink ? sink : &stderr_sink;
  g_sink_user = user;
}

void warn(std::string_view message) { g_sink(message, g_sink_user); }

}  // namespace imix
