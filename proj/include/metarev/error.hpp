#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metarev {

/// Failure categories surfaced by every module. Tests match on the code,
/// callers can still print what().
enum class Errc {
  MalformedRecord,
  DanglingParent,
  CycleDetected,
  MetadataOnNonReview,
  NoDecisionNote,
  AmbiguousDecision,
  UnknownDocument,
  EmptyCorpus,
  BudgetTooSmall,
  ShapeMismatch,
  EmptyAttentionRow,
  NoRecordedGraph,
  OutOfRange,
  PositionOutOfBounds,
  LengthMismatch,
  EmptyDecoderOutput,
  NonFiniteLoss,
  CorruptCheckpoint,
  ConfigMismatch,
  EmptySummaryAfterPreprocessing,
  EmptyText,
  SingleClassCorpus,
  InvalidArgument,
  Io,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace metarev
