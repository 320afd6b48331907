#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mbssl/audio.hpp"
#include "mbssl/matrix.hpp"

namespace mbssl {

struct MelFilterbankConfig {
  int n_mels = 40;
  int fft_size = 512;
  double f_min_hz = 20.0;
  double f_max_hz = 7600.0;
  double window_ms = 25.0;
  double hop_ms = 10.0;
};

/// Throws InvalidConfig unless the config is usable at `sample_rate_hz`.
void validate(const MelFilterbankConfig& cfg, int sample_rate_hz);

/// T x D frame features. Stands in for encoder-layer features when clustering.
struct FeatureMatrix {
  Matrix values;
  double frame_hop_ms = 10.0;
  double frame_window_ms = 25.0;
  std::string source_utt_id;

  std::size_t num_frames() const noexcept { return values.rows(); }
  std::size_t dim() const noexcept { return values.cols(); }
};

std::size_t ms_to_samples(double ms, int rate_hz);

/// floor((N - W) / H) + 1; TooShort when N < W.
std::size_t frame_count(std::size_t n_samples, double window_ms, double hop_ms, int rate_hz);

/// In-place iterative radix-2 FFT. Size must be a power of two.
void fft(std::span<std::complex<double>> data);

bool is_power_of_two(std::size_t n) noexcept;

/// Symmetric Hann window of length n.
std::vector<double> hann_window(std::size_t n);

enum class Window { hann, rectangular };

/// |X_k|^2 for k = 0..fft_size/2 of the windowed, zero-padded frame.
std::vector<double> power_spectrum(std::span<const double> frame, std::size_t fft_size,
                                   Window window = Window::hann);

/// Time-domain energy implied by a one-sided power spectrum:
/// (P_0 + 2 * sum_{0<k<N/2} P_k + P_{N/2}) / N.
double spectrum_energy(std::span<const double> power, std::size_t fft_size);

double hz_to_mel(double hz) noexcept;
double mel_to_hz(double mel) noexcept;

/// n_mels x (fft_size/2 + 1) triangular weights, triangles spaced evenly on the
/// mel scale between f_min and f_max.
Matrix mel_filterbank(const MelFilterbankConfig& cfg, int sample_rate_hz);

inline constexpr double kLogFloor = 1e-10;

/// ln(mel energy + 1e-10) per frame. No pre-emphasis, no dithering.
FeatureMatrix logmel(const AudioBuffer& buf, const MelFilterbankConfig& cfg,
                     std::string utt_id = {});

struct BandEnergyReport {
  double cutoff_hz = 0.0;
  double low_band_energy = 0.0;
  double high_band_energy = 0.0;
  double high_fraction = 0.0;
};

/// Splits the frame-averaged power spectrum at `cutoff_hz`. Frames use a 25 ms
/// Hann window, 10 ms hop and the smallest power-of-two FFT covering the window.
BandEnergyReport band_energy_ratio(const AudioBuffer& buf, double cutoff_hz);

/// T x (fft_size/2 + 1) grid of 10 log10(power + 1e-10) dB.
Matrix spectrogram_db(const AudioBuffer& buf, const MelFilterbankConfig& cfg);

enum class SpectrogramFormat { csv, pgm };

/// CSV: one frame per line. PGM: binary P5, frames as rows, 8-bit linear in
/// [min, max] dB.
std::vector<std::uint8_t> export_spectrogram(const AudioBuffer& buf,
                                             const MelFilterbankConfig& cfg,
                                             SpectrogramFormat format);

}  // namespace mbssl
