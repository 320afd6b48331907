#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mbssl {

enum class Channel { wide, narrow };

inline constexpr int kWideRateHz = 16000;
inline constexpr int kNarrowRateHz = 8000;

std::string_view to_string(Channel channel) noexcept;
/// Parses "wide" / "narrow"; nullopt for anything else.
std::optional<Channel> parse_channel(std::string_view text) noexcept;
/// The sample rate a channel's audio is expected to arrive at.
int native_rate(Channel channel) noexcept;

/// Mono audio; samples are nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate_hz = kWideRateHz;

  double duration_s() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

struct WavEncoding {
  std::vector<std::uint8_t> bytes;
  std::size_t clip_count = 0;
};

/// Decodes a RIFF/WAVE PCM16 mono container. Unknown chunks are skipped.
AudioBuffer parse_wav(std::span<const std::uint8_t> bytes);

/// Encodes as canonical 44-byte-header PCM16 mono. Out-of-range samples are
/// saturated and counted in `clip_count`.
WavEncoding write_wav(const AudioBuffer& buf);

AudioBuffer read_wav_file(const std::filesystem::path& path);
std::size_t write_wav_file(const std::filesystem::path& path, const AudioBuffer& buf);

/// 2:1 / 1:2 polyphase windowed-sinc resampler (8 kHz <-> 16 kHz and any other
/// exact factor-of-two pair). Equal rates return a copy.
AudioBuffer resample(const AudioBuffer& buf, int target_rate_hz);

/// Taps of the prototype low-pass used by `resample`, designed at the higher
/// of the two rates. Exposed for filter-response tests.
std::vector<double> resampler_kernel();

enum class SignalKind { sine, chirp, white_noise };

std::optional<SignalKind> parse_signal_kind(std::string_view text) noexcept;

inline constexpr double kToneAmplitude = 0.8;

/// Deterministic test-signal generator.
///  - sine: 0.8 * sin(2 pi f t)
///  - chirp: linear sweep from `freq_hz` / 8 up to `freq_hz`, amplitude 0.8
///  - white_noise: uniform in [-0.8, 0.8]; `freq_hz` is ignored
/// The sample count is round(duration_s * rate_hz).
AudioBuffer synthesize(SignalKind kind, double freq_hz, double duration_s, int rate_hz,
                       std::uint64_t seed);

}  // namespace mbssl
