#include "xlint/error.h"

namespace xlint {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedInput: return "MalformedInput";
    case ErrorCode::kDuplicateRowId: return "DuplicateRowId";
    case ErrorCode::kEmptyTable: return "EmptyTable";
    case ErrorCode::kMissingFeature: return "MissingFeature";
    case ErrorCode::kTooManyFeatures: return "TooManyFeatures";
    case ErrorCode::kUnknownFeature: return "UnknownFeature";
    case ErrorCode::kTypeMismatch: return "TypeMismatch";
    case ErrorCode::kUnknownInsightType: return "UnknownInsightType";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kNoParse: return "NoParse";
    case ErrorCode::kProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::kUnparseableClassification: return "UnparseableClassification";
    case ErrorCode::kUnresolvableField: return "UnresolvableField";
    case ErrorCode::kInvariantViolation: return "InvariantViolation";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kOpenSlots: return "OpenSlots";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

namespace {
std::string Compose(ErrorCode code, const std::string& message,
                    const std::string& path) {
  std::string out(ErrorCodeName(code));
  if (!path.empty()) out += " at " + path;
  if (!message.empty()) out += ": " + message;
  return out;
}
}  // namespace

Error::Error(ErrorCode code, std::string message, std::string path)
    : std::runtime_error(Compose(code, message, path)),
      code_(code),
      path_(std::move(path)) {}

}  // namespace xlint
