#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ttn {

enum class ErrorCode {
  InvalidArgument,
  IoError,
  EmptyVocabulary,
  EmptyDocument,
  IndexOutOfRange,
  FormatVersionMismatch,
  CorruptFile,
  ShapeMismatch,
  NonFiniteInput,
  NoPairs,
  CropTooLarge,
  UnknownLayer,
  DecodeError,
  DimensionMismatch,
  DuplicateId,
  EmptyModality,
  SingleClassData,
  NoRelevant,
  Empty,
};

std::string_view error_name(ErrorCode code);

// Every module error carries a code; what() starts with the code name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

inline void require(bool ok, ErrorCode code, const std::string& detail) {
  if (!ok) fail(code, detail);
}

}  // namespace ttn
