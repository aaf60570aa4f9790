#pragma once

#include <stdexcept>
#include <string>

namespace spur {

// Every recoverable failure in the library is a SpurError carrying one of
// these kinds. Callers that need to branch on the failure mode (skip/fail
// policies, CLI exit codes, tests) switch on kind() instead of parsing
// message text.
enum class ErrorKind {
  // corpus
  MalformedRecord,
  DuplicateId,
  EmptyFile,
  EmptyLabelList,
  InsufficientData,
  // gateway
  ProviderUnavailable,
  AuthFailure,
  RequestRejected,
  CacheCorrupt,
  UnscriptedRequest,
  // extraction
  MissingReasonsTags,
  EmptyCompletion,
  NoMatchingConversations,
  // rubric
  EmptyPatternSet,
  MissingRubricTags,
  NoNumberedItems,
  // scoring
  MissingItem,
  UnparsableAnswer,
  // metrics
  LengthMismatch,
  EmptyInput,
  DegenerateMargins,
  NoClickData,
  SingleClass,
  NoClicks,
  // linear models
  DimensionMismatch,
  NonFiniteFeature,
  DivergedLoss,
  MissingEmbedding,
  SingleClassTraining,
  // configuration / io
  InvalidConfig,
  IoError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::EmptyLabelList: return "EmptyLabelList";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorKind::AuthFailure: return "AuthFailure";
    case ErrorKind::RequestRejected: return "RequestRejected";
    case ErrorKind::CacheCorrupt: return "CacheCorrupt";
    case ErrorKind::UnscriptedRequest: return "UnscriptedRequest";
    case ErrorKind::MissingReasonsTags: return "MissingReasonsTags";
    case ErrorKind::EmptyCompletion: return "EmptyCompletion";
    case ErrorKind::NoMatchingConversations: return "NoMatchingConversations";
    case ErrorKind::EmptyPatternSet: return "EmptyPatternSet";
    case ErrorKind::MissingRubricTags: return "MissingRubricTags";
    case ErrorKind::NoNumberedItems: return "NoNumberedItems";
    case ErrorKind::MissingItem: return "MissingItem";
    case ErrorKind::UnparsableAnswer: return "UnparsableAnswer";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DegenerateMargins: return "DegenerateMargins";
    case ErrorKind::NoClickData: return "NoClickData";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::NoClicks: return "NoClicks";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::SingleClassTraining: return "SingleClassTraining";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoError: return "IoError";
  }
  return "UnknownError";
}

class SpurError : public std::runtime_error {
 public:
  SpurError(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix, for callers that rewrap with context.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw SpurError(kind, message);
}

}  // namespace spur
