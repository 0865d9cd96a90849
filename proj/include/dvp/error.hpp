#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dvp {

// One code per failure mode surfaced by the engine. The service maps each
// code to exactly one HTTP status.
enum class Errc {
  InvalidArgument,
  DimensionMismatch,
  ZeroVector,
  KTooLarge,
  EmptyBank,
  UnreadableDirectory,
  DecodeError,
  IoError,
  BackendUnavailable,
  PartialCache,
  EmptyPrompt,
  EmptyElement,
  QTooLarge,
  TooManyElements,
  PinOutOfBounds,
  PinOnCanvas,
  InsufficientCandidates,
  MissingImage,
  ZeroSizeCell,
  Timeout,
  ContentRejected,
  UnknownJob,
  UnknownSession,
  UnknownBank,
  UnknownImage,
  PartialRun,
  EmptyInput,
  BankLocked,
};

std::string_view to_string(Errc code) noexcept;

// Transient failures a caller may retry.
bool is_retryable(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }
  bool retryable() const noexcept { return is_retryable(code_); }

 private:
  Errc code_;
};

}  // namespace dvp
