#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mbssl {

enum class Errc {
  UnsupportedFormat,
  UnsupportedChannels,
  MalformedFile,
  UnsupportedRatio,
  InvalidFrequency,
  TooShort,
  InvalidConfig,
  InsufficientData,
  DimensionMismatch,
  OffsetTooSmall,
  AlreadyWrapped,
  EmptyInput,
  NoMaskedFrames,
  LabelOutOfRange,
  LengthMismatch,
  TargetTooLong,
  InvalidTarget,
  ChannelMismatch,
  IoError,
  InvariantViolation,
};

std::string_view to_string(Errc code) noexcept;

// All library failures are reported through this one exception type; the code
// is what callers (and the CLI exit-code mapping) switch on.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mbssl
