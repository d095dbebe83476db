#ifndef GSINA_ERROR_HPP
#define GSINA_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace gsina {

enum class ErrorCode {
  IndexOutOfRange,
  SelfLoop,
  DuplicateEdge,
  InvalidGraph,
  EmptyBatch,
  FeatureDimMismatch,
  InvalidPermutation,
  SizeTooSmall,
  InvalidConfig,
  ShapeMismatch,
  NonFiniteValue,
  NotScalar,
  DetachedTensor,
  MissingGradient,
  EmptySegment,
  InvalidRatio,
  ZeroMarginal,
  SegmentTooSmall,
  DegenerateTrace,
  TooFewEdges,
  InvalidLabel,
  MissingMask,
  Divergence,
  EmptyDataset,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` identifies the failure kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::InvalidGraph: return "InvalidGraph";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::FeatureDimMismatch: return "FeatureDimMismatch";
    case ErrorCode::InvalidPermutation: return "InvalidPermutation";
    case ErrorCode::SizeTooSmall: return "SizeTooSmall";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::DetachedTensor: return "DetachedTensor";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::EmptySegment: return "EmptySegment";
    case ErrorCode::InvalidRatio: return "InvalidRatio";
    case ErrorCode::ZeroMarginal: return "ZeroMarginal";
    case ErrorCode::SegmentTooSmall: return "SegmentTooSmall";
    case ErrorCode::DegenerateTrace: return "DegenerateTrace";
    case ErrorCode::TooFewEdges: return "TooFewEdges";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::MissingMask: return "MissingMask";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

}  // namespace gsina

#endif  // GSINA_ERROR_HPP
