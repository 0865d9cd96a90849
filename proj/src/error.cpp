#include "dvp/error.hpp"

namespace dvp {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::EmptyBank: return "EmptyBank";
    case Errc::UnreadableDirectory: return "UnreadableDirectory";
    case Errc::DecodeError: return "DecodeError";
    case Errc::IoError: return "IoError";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::PartialCache: return "PartialCache";
    case Errc::EmptyPrompt: return "EmptyPrompt";
    case Errc::EmptyElement: return "EmptyElement";
    case Errc::QTooLarge: return "QTooLarge";
    case Errc::TooManyElements: return "TooManyElements";
    case Errc::PinOutOfBounds: return "PinOutOfBounds";
    case Errc::PinOnCanvas: return "PinOnCanvas";
    case Errc::InsufficientCandidates: return "InsufficientCandidates";
    case Errc::MissingImage: return "MissingImage";
    case Errc::ZeroSizeCell: return "ZeroSizeCell";
    case Errc::Timeout: return "Timeout";
    case Errc::ContentRejected: return "ContentRejected";
    case Errc::UnknownJob: return "UnknownJob";
    case Errc::UnknownSession: return "UnknownSession";
    case Errc::UnknownBank: return "UnknownBank";
    case Errc::UnknownImage: return "UnknownImage";
    case Errc::PartialRun: return "PartialRun";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::BankLocked: return "BankLocked";
  }
  return "Unknown";
}

bool is_retryable(Errc code) noexcept {
  return code == Errc::BackendUnavailable || code == Errc::Timeout ||
         code == Errc::BankLocked;
}

}  // namespace dvp
