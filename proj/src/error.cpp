#include "metarev/error.hpp"

namespace metarev {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::DanglingParent: return "DanglingParent";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::MetadataOnNonReview: return "MetadataOnNonReview";
    case Errc::NoDecisionNote: return "NoDecisionNote";
    case Errc::AmbiguousDecision: return "AmbiguousDecision";
    case Errc::UnknownDocument: return "UnknownDocument";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::BudgetTooSmall: return "BudgetTooSmall";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyAttentionRow: return "EmptyAttentionRow";
    case Errc::NoRecordedGraph: return "NoRecordedGraph";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::PositionOutOfBounds: return "PositionOutOfBounds";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyDecoderOutput: return "EmptyDecoderOutput";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::EmptySummaryAfterPreprocessing: return "EmptySummaryAfterPreprocessing";
    case Errc::EmptyText: return "EmptyText";
    case Errc::SingleClassCorpus: return "SingleClassCorpus";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace metarev
