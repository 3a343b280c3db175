#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xlint {

enum class ErrorCode {
  kMalformedInput,
  kDuplicateRowId,
  kEmptyTable,
  kMissingFeature,
  kTooManyFeatures,
  kUnknownFeature,
  kTypeMismatch,
  kUnknownInsightType,
  kSchemaViolation,
  kNoParse,
  kProviderUnavailable,
  kUnparseableClassification,
  kUnresolvableField,
  kInvariantViolation,
  kNotFound,
  kOpenSlots,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

// Exception carrying a typed code and, where it applies, a JSON path or
// field path locating the problem.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string path = {});

  ErrorCode code() const { return code_; }
  const std::string& path() const { return path_; }

 private:
  ErrorCode code_;
  std::string path_;
};

}  // namespace xlint
