#include "mbssl/audio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "mbssl/error.hpp"
#include "mbssl/random.hpp"

namespace mbssl {

std::string_view to_string(Channel channel) noexcept {
  return channel == Channel::wide ? "wide" : "narrow";
}

std::optional<Channel> parse_channel(std::string_view text) noexcept {
  if (text == "wide") return Channel::wide;
  if (text == "narrow") return Channel::narrow;
  return std::nullopt;
}

int native_rate(Channel channel) noexcept {
  return channel == Channel::wide ? kWideRateHz : kNarrowRateHz;
}

std::optional<SignalKind> parse_signal_kind(std::string_view text) noexcept {
  if (text == "sine") return SignalKind::sine;
  if (text == "chirp") return SignalKind::chirp;
  if (text == "white_noise") return SignalKind::white_noise;
  return std::nullopt;
}

namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;
constexpr double kPcmScale = 32768.0;

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, std::string_view tag) {
  return std::equal(tag.begin(), tag.end(), b.begin() + static_cast<std::ptrdiff_t>(at));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_tag(std::vector<std::uint8_t>& out, std::string_view tag) {
  out.insert(out.end(), tag.begin(), tag.end());
}

}  // namespace

AudioBuffer parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw Error(Errc::MalformedFile, "missing RIFF/WAVE header");
  }

  std::optional<std::span<const std::uint8_t>> fmt;
  std::optional<std::span<const std::uint8_t>> data;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (size > bytes.size() - body) {
      throw Error(Errc::MalformedFile, "chunk at offset " + std::to_string(pos) + " is truncated");
    }
    if (tag_is(bytes, pos, "fmt ")) {
      fmt = bytes.subspan(body, size);
    } else if (tag_is(bytes, pos, "data")) {
      data = bytes.subspan(body, size);
    }
    // RIFF chunks are word aligned.
    pos = body + size + (size & 1U);
  }
  if (pos < bytes.size() && !data) {
    throw Error(Errc::MalformedFile, "trailing bytes do not form a chunk header");
  }
  if (!fmt || fmt->size() < 16) throw Error(Errc::MalformedFile, "missing or short fmt chunk");
  if (!data) throw Error(Errc::MalformedFile, "missing data chunk");

  std::uint16_t format = read_u16(*fmt, 0);
  if (format == kFormatExtensible) {
    if (fmt->size() < 40) throw Error(Errc::MalformedFile, "short WAVE_FORMAT_EXTENSIBLE chunk");
    format = read_u16(*fmt, 24);
  }
  const std::uint16_t channels = read_u16(*fmt, 2);
  const std::uint32_t rate = read_u32(*fmt, 4);
  const std::uint16_t bits = read_u16(*fmt, 14);
  if (format != kFormatPcm) {
    throw Error(Errc::UnsupportedFormat, "codec tag " + std::to_string(format) + " is not PCM");
  }
  if (bits != 16) {
    throw Error(Errc::UnsupportedFormat, std::to_string(bits) + "-bit PCM is not supported");
  }
  if (channels != 1) {
    throw Error(Errc::UnsupportedChannels, std::to_string(channels) + " channels, expected mono");
  }
  if (rate == 0 || rate > static_cast<std::uint32_t>(INT32_MAX)) {
    throw Error(Errc::MalformedFile, "invalid sample rate " + std::to_string(rate));
  }
  if (data->size() % 2 != 0) throw Error(Errc::MalformedFile, "data chunk has odd byte count");

  AudioBuffer buf;
  buf.sample_rate_hz = static_cast<int>(rate);
  buf.samples.reserve(data->size() / 2);
  for (std::size_t i = 0; i < data->size(); i += 2) {
    const auto raw = static_cast<std::int16_t>(read_u16(*data, i));
    buf.samples.push_back(raw / kPcmScale);
  }
  return buf;
}

WavEncoding write_wav(const AudioBuffer& buf) {
  if (buf.sample_rate_hz <= 0) throw Error(Errc::InvalidConfig, "sample rate must be positive");
  const std::size_t data_bytes = buf.samples.size() * 2;
  if (data_bytes > UINT32_MAX - 36) throw Error(Errc::InvalidConfig, "audio too long for RIFF");

  WavEncoding enc;
  auto& out = enc.bytes;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(36 + data_bytes));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data_bytes));

  for (double s : buf.samples) {
    // +1.0 itself saturates to 32767 without counting as a clip.
    if (std::isnan(s) || s > 1.0 || s < -1.0) ++enc.clip_count;
    const double scaled =
        std::isnan(s) ? 0.0 : std::clamp(std::nearbyint(s * kPcmScale), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return enc;
}

AudioBuffer read_wav_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::size_t write_wav_file(const std::filesystem::path& path, const AudioBuffer& buf) {
  const WavEncoding enc = write_wav(buf);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(enc.bytes.data()),
            static_cast<std::streamsize>(enc.bytes.size()));
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
  return enc.clip_count;
}

// --- resampling -------------------------------------------------------------

namespace {

// Prototype low-pass at the high rate: Hann-windowed sinc, 64 taps either side
// of the centre, cutoff at 0.45 x the low rate (0.9 x its Nyquist).
constexpr int kHalfTaps = 64;
constexpr double kCutoffOfLowRate = 0.45;

std::vector<double> design_kernel() {
  // Cutoff as a fraction of the high rate; the ratio is always 2.
  const double fc = kCutoffOfLowRate / 2.0;
  std::vector<double> h(2 * kHalfTaps + 1);
  for (int n = -kHalfTaps; n <= kHalfTaps; ++n) {
    const double x = 2.0 * fc * n;
    const double sinc = n == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * n / (kHalfTaps + 1));
    h[static_cast<std::size_t>(n + kHalfTaps)] = 2.0 * fc * sinc * window;
  }
  return h;
}

// Sub-filters for the two output phases of 1:2 interpolation. Each phase is
// normalized to unit DC gain so that a constant input stays constant.
struct Polyphase {
  std::vector<double> taps;  // full kernel, normalized to sum 1
  double even_gain = 1.0;
  double odd_gain = 1.0;
};

const Polyphase& polyphase() {
  static const Polyphase p = [] {
    Polyphase out;
    out.taps = design_kernel();
    double total = 0.0;
    double even = 0.0;
    double odd = 0.0;
    for (int n = -kHalfTaps; n <= kHalfTaps; ++n) {
      const double v = out.taps[static_cast<std::size_t>(n + kHalfTaps)];
      total += v;
      ((n % 2 == 0) ? even : odd) += v;
    }
    for (double& v : out.taps) v /= total;
    out.even_gain = total / even;
    out.odd_gain = total / odd;
    return out;
  }();
  return p;
}

AudioBuffer decimate_by_two(const AudioBuffer& in) {
  const auto& p = polyphase();
  const auto n_in = static_cast<std::ptrdiff_t>(in.samples.size());
  AudioBuffer out;
  out.sample_rate_hz = in.sample_rate_hz / 2;
  out.samples.resize(static_cast<std::size_t>((n_in + 1) / 2));
  for (std::ptrdiff_t m = 0; m < static_cast<std::ptrdiff_t>(out.samples.size()); ++m) {
    const std::ptrdiff_t centre = 2 * m;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-kHalfTaps, centre - (n_in - 1));
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(kHalfTaps, centre);
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      acc += p.taps[static_cast<std::size_t>(k + kHalfTaps)] *
             in.samples[static_cast<std::size_t>(centre - k)];
    }
    out.samples[static_cast<std::size_t>(m)] = acc;
  }
  return out;
}

AudioBuffer interpolate_by_two(const AudioBuffer& in) {
  const auto& p = polyphase();
  const auto n_in = static_cast<std::ptrdiff_t>(in.samples.size());
  AudioBuffer out;
  out.sample_rate_hz = in.sample_rate_hz * 2;
  out.samples.resize(static_cast<std::size_t>(2 * n_in));
  for (std::ptrdiff_t j = 0; j < 2 * n_in; ++j) {
    // Zero-stuffed input x[m] sits at high-rate index 2m; only kernel taps
    // with the parity of j contribute.
    const double gain = (j % 2 == 0) ? p.even_gain : p.odd_gain;
    const std::ptrdiff_t m_lo = std::max<std::ptrdiff_t>(0, (j - kHalfTaps + 1) / 2);
    const std::ptrdiff_t m_hi = std::min<std::ptrdiff_t>(n_in - 1, (j + kHalfTaps) / 2);
    double acc = 0.0;
    for (std::ptrdiff_t m = m_lo; m <= m_hi; ++m) {
      const std::ptrdiff_t k = j - 2 * m;
      if (k < -kHalfTaps || k > kHalfTaps) continue;
      acc += p.taps[static_cast<std::size_t>(k + kHalfTaps)] *
             in.samples[static_cast<std::size_t>(m)];
    }
    out.samples[static_cast<std::size_t>(j)] = gain * acc;
  }
  return out;
}

}  // namespace

std::vector<double> resampler_kernel() { return polyphase().taps; }

AudioBuffer resample(const AudioBuffer& buf, int target_rate_hz) {
  if (buf.sample_rate_hz <= 0 || target_rate_hz <= 0) {
    throw Error(Errc::UnsupportedRatio, "sample rates must be positive");
  }
  if (target_rate_hz == buf.sample_rate_hz) return buf;
  if (target_rate_hz * 2 == buf.sample_rate_hz) return decimate_by_two(buf);
  if (buf.sample_rate_hz * 2 == target_rate_hz) return interpolate_by_two(buf);
  throw Error(Errc::UnsupportedRatio, std::to_string(buf.sample_rate_hz) + " Hz -> " +
                                          std::to_string(target_rate_hz) +
                                          " Hz is not a 2:1 or 1:2 ratio");
}

// --- synthesis ----------------------------------------------------------------

AudioBuffer synthesize(SignalKind kind, double freq_hz, double duration_s, int rate_hz,
                       std::uint64_t seed) {
  if (rate_hz <= 0) throw Error(Errc::InvalidConfig, "sample rate must be positive");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw Error(Errc::InvalidConfig, "duration must be positive");
  }
  if (kind != SignalKind::white_noise && !(freq_hz > 0.0 && freq_hz < rate_hz / 2.0)) {
    throw Error(Errc::InvalidFrequency, std::to_string(freq_hz) + " Hz is outside (0, " +
                                            std::to_string(rate_hz / 2) + ") Hz");
  }

  AudioBuffer buf;
  buf.sample_rate_hz = rate_hz;
  buf.samples.resize(static_cast<std::size_t>(std::llround(duration_s * rate_hz)));
  const double two_pi = 2.0 * std::numbers::pi;
  switch (kind) {
    case SignalKind::sine:
      for (std::size_t n = 0; n < buf.samples.size(); ++n) {
        const double t = static_cast<double>(n) / rate_hz;
        buf.samples[n] = kToneAmplitude * std::sin(two_pi * freq_hz * t);
      }
      break;
    case SignalKind::chirp: {
      const double f0 = freq_hz / 8.0;
      const double sweep = (freq_hz - f0) / duration_s;
      for (std::size_t n = 0; n < buf.samples.size(); ++n) {
        const double t = static_cast<double>(n) / rate_hz;
        buf.samples[n] = kToneAmplitude * std::sin(two_pi * (f0 * t + 0.5 * sweep * t * t));
      }
      break;
    }
    case SignalKind::white_noise: {
      Rng rng(seed);
      for (double& s : buf.samples) s = kToneAmplitude * (2.0 * rng.uniform() - 1.0);
      break;
    }
  }
  return buf;
}

}  // namespace mbssl
