#include "mbssl/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "mbssl/error.hpp"

namespace mbssl {

void validate(const MelFilterbankConfig& cfg, int sample_rate_hz) {
  if (sample_rate_hz <= 0) throw Error(Errc::InvalidConfig, "sample rate must be positive");
  if (cfg.n_mels < 2) throw Error(Errc::InvalidConfig, "n_mels must be >= 2");
  if (cfg.fft_size <= 0 || !is_power_of_two(static_cast<std::size_t>(cfg.fft_size))) {
    throw Error(Errc::InvalidConfig, "fft_size must be a power of two");
  }
  if (!(cfg.f_min_hz >= 0.0 && cfg.f_min_hz < cfg.f_max_hz &&
        cfg.f_max_hz <= sample_rate_hz / 2.0)) {
    throw Error(Errc::InvalidConfig, "need 0 <= f_min < f_max <= " +
                                         std::to_string(sample_rate_hz / 2) + " Hz");
  }
  if (!(cfg.window_ms > 0.0 && cfg.hop_ms > 0.0)) {
    throw Error(Errc::InvalidConfig, "window and hop must be positive");
  }
  if (ms_to_samples(cfg.window_ms, sample_rate_hz) > static_cast<std::size_t>(cfg.fft_size)) {
    throw Error(Errc::InvalidConfig, "window longer than fft_size");
  }
}

std::size_t ms_to_samples(double ms, int rate_hz) {
  return static_cast<std::size_t>(std::llround(ms * rate_hz / 1000.0));
}

std::size_t frame_count(std::size_t n_samples, double window_ms, double hop_ms, int rate_hz) {
  const std::size_t window = ms_to_samples(window_ms, rate_hz);
  const std::size_t hop = ms_to_samples(hop_ms, rate_hz);
  if (window == 0 || hop == 0) throw Error(Errc::InvalidConfig, "window/hop round to 0 samples");
  if (n_samples < window) {
    throw Error(Errc::TooShort, std::to_string(n_samples) + " samples is shorter than one " +
                                    std::to_string(window) + "-sample window");
  }
  return (n_samples - window) / hop + 1;
}

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

void fft(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw Error(Errc::InvalidConfig, "FFT size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const std::complex<double> even = data[start + k];
        const std::complex<double> odd = data[start + k + len / 2] * w;
        data[start + k] = even + odd;
        data[start + k + len / 2] = even - odd;
      }
    }
  }
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n - 1));
  }
  return w;
}

namespace {

std::vector<double> power_spectrum_with(std::span<const double> frame,
                                        std::span<const double> window, std::size_t fft_size,
                                        std::vector<std::complex<double>>& scratch) {
  scratch.assign(fft_size, {0.0, 0.0});
  for (std::size_t i = 0; i < frame.size(); ++i) {
    scratch[i] = window.empty() ? frame[i] : frame[i] * window[i];
  }
  fft(scratch);
  std::vector<double> power(fft_size / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(scratch[k]);
  return power;
}

// Frame-by-frame power spectra of the whole buffer.
template <typename Fn>
void for_each_frame_spectrum(const AudioBuffer& buf, double window_ms, double hop_ms,
                             std::size_t fft_size, Fn&& fn) {
  const std::size_t n_frames =
      frame_count(buf.samples.size(), window_ms, hop_ms, buf.sample_rate_hz);
  const std::size_t win = ms_to_samples(window_ms, buf.sample_rate_hz);
  const std::size_t hop = ms_to_samples(hop_ms, buf.sample_rate_hz);
  const std::vector<double> window = hann_window(win);
  std::vector<std::complex<double>> scratch;
  const std::span<const double> samples(buf.samples);
  for (std::size_t t = 0; t < n_frames; ++t) {
    fn(t, power_spectrum_with(samples.subspan(t * hop, win), window, fft_size, scratch));
  }
}

}  // namespace

std::vector<double> power_spectrum(std::span<const double> frame, std::size_t fft_size,
                                   Window window) {
  if (!is_power_of_two(fft_size)) {
    throw Error(Errc::InvalidConfig, "fft_size " + std::to_string(fft_size) +
                                         " is not a power of two");
  }
  if (frame.size() > fft_size) throw Error(Errc::InvalidConfig, "frame longer than fft_size");
  std::vector<std::complex<double>> scratch;
  const std::vector<double> w =
      window == Window::hann ? hann_window(frame.size()) : std::vector<double>{};
  return power_spectrum_with(frame, w, fft_size, scratch);
}

double spectrum_energy(std::span<const double> power, std::size_t fft_size) {
  if (power.size() != fft_size / 2 + 1) {
    throw Error(Errc::DimensionMismatch, "spectrum does not match fft_size");
  }
  double sum = power.front() + power.back();
  for (std::size_t k = 1; k + 1 < power.size(); ++k) sum += 2.0 * power[k];
  return sum / static_cast<double>(fft_size);
}

double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(const MelFilterbankConfig& cfg, int sample_rate_hz) {
  validate(cfg, sample_rate_hz);
  const std::size_t n_bins = static_cast<std::size_t>(cfg.fft_size) / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.f_min_hz);
  const double mel_hi = hz_to_mel(cfg.f_max_hz);
  const double step = (mel_hi - mel_lo) / (cfg.n_mels + 1);

  Matrix bank(static_cast<std::size_t>(cfg.n_mels), n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = mel_lo + m * step;
    const double centre = left + step;
    const double right = centre + step;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate_hz / cfg.fft_size);
      double w = 0.0;
      if (mel > left && mel <= centre) {
        w = (mel - left) / (centre - left);
      } else if (mel > centre && mel < right) {
        w = (right - mel) / (right - centre);
      }
      bank(static_cast<std::size_t>(m), k) = w;
    }
  }
  return bank;
}

FeatureMatrix logmel(const AudioBuffer& buf, const MelFilterbankConfig& cfg, std::string utt_id) {
  const Matrix bank = mel_filterbank(cfg, buf.sample_rate_hz);
  const std::size_t n_frames =
      frame_count(buf.samples.size(), cfg.window_ms, cfg.hop_ms, buf.sample_rate_hz);

  FeatureMatrix out;
  out.values = Matrix(n_frames, bank.rows());
  out.frame_hop_ms = cfg.hop_ms;
  out.frame_window_ms = cfg.window_ms;
  out.source_utt_id = std::move(utt_id);
  for_each_frame_spectrum(
      buf, cfg.window_ms, cfg.hop_ms, static_cast<std::size_t>(cfg.fft_size),
      [&](std::size_t t, const std::vector<double>& power) {
        auto row = out.values.row(t);
        for (std::size_t m = 0; m < bank.rows(); ++m) {
          const auto weights = bank.row(m);
          double energy = 0.0;
          for (std::size_t k = 0; k < power.size(); ++k) energy += weights[k] * power[k];
          row[m] = std::log(energy + kLogFloor);
        }
      });
  return out;
}

BandEnergyReport band_energy_ratio(const AudioBuffer& buf, double cutoff_hz) {
  if (buf.sample_rate_hz <= 0) throw Error(Errc::InvalidConfig, "sample rate must be positive");
  if (!(cutoff_hz > 0.0 && cutoff_hz < buf.sample_rate_hz / 2.0)) {
    throw Error(Errc::InvalidConfig, "cutoff " + std::to_string(cutoff_hz) +
                                         " Hz must lie in (0, Nyquist)");
  }
  constexpr double kWindowMs = 25.0;
  constexpr double kHopMs = 10.0;
  std::size_t fft_size = 1;
  while (fft_size < ms_to_samples(kWindowMs, buf.sample_rate_hz)) fft_size <<= 1;

  std::vector<double> mean_power(fft_size / 2 + 1, 0.0);
  std::size_t n_frames = 0;
  for_each_frame_spectrum(buf, kWindowMs, kHopMs, fft_size,
                          [&](std::size_t, const std::vector<double>& power) {
                            for (std::size_t k = 0; k < power.size(); ++k) {
                              mean_power[k] += power[k];
                            }
                            ++n_frames;
                          });

  BandEnergyReport report;
  report.cutoff_hz = cutoff_hz;
  const std::size_t last = mean_power.size() - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    // One-sided spectrum: interior bins stand for both +f and -f.
    const double weight = (k == 0 || k == last) ? 1.0 : 2.0;
    const double energy = weight * mean_power[k] / static_cast<double>(n_frames);
    const double freq = static_cast<double>(k) * buf.sample_rate_hz / static_cast<double>(fft_size);
    (freq > cutoff_hz ? report.high_band_energy : report.low_band_energy) += energy;
  }
  const double total = report.low_band_energy + report.high_band_energy;
  report.high_fraction = total > 0.0 ? report.high_band_energy / total : 0.0;
  return report;
}

Matrix spectrogram_db(const AudioBuffer& buf, const MelFilterbankConfig& cfg) {
  validate(cfg, buf.sample_rate_hz);
  const std::size_t n_frames =
      frame_count(buf.samples.size(), cfg.window_ms, cfg.hop_ms, buf.sample_rate_hz);
  Matrix grid(n_frames, static_cast<std::size_t>(cfg.fft_size) / 2 + 1);
  for_each_frame_spectrum(buf, cfg.window_ms, cfg.hop_ms, static_cast<std::size_t>(cfg.fft_size),
                          [&](std::size_t t, const std::vector<double>& power) {
                            auto row = grid.row(t);
                            for (std::size_t k = 0; k < power.size(); ++k) {
                              row[k] = 10.0 * std::log10(power[k] + kLogFloor);
                            }
                          });
  return grid;
}

std::vector<std::uint8_t> export_spectrogram(const AudioBuffer& buf,
                                             const MelFilterbankConfig& cfg,
                                             SpectrogramFormat format) {
  const Matrix grid = spectrogram_db(buf, cfg);
  std::vector<std::uint8_t> out;
  auto append = [&out](std::string_view s) { out.insert(out.end(), s.begin(), s.end()); };

  if (format == SpectrogramFormat::csv) {
    char num[32];
    for (std::size_t t = 0; t < grid.rows(); ++t) {
      const auto row = grid.row(t);
      for (std::size_t k = 0; k < row.size(); ++k) {
        std::snprintf(num, sizeof num, k == 0 ? "%.4f" : ",%.4f", row[k]);
        append(num);
      }
      append("\n");
    }
    return out;
  }

  const auto values = grid.data();
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  append("P5\n" + std::to_string(grid.cols()) + " " + std::to_string(grid.rows()) + "\n255\n");
  for (double v : values) {
    const double level = range > 0.0 ? std::round(255.0 * (v - lo) / range) : 0.0;
    out.push_back(static_cast<std::uint8_t>(level));
  }
  return out;
}

}  // namespace mbssl
