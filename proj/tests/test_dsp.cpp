#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "doctest.h"
#include "mbssl/audio.hpp"
#include "mbssl/dsp.hpp"
#include "mbssl/error.hpp"
#include "mbssl/random.hpp"
#include "oracles.hpp"

using namespace mbssl;

namespace {

AudioBuffer tone(double f, double seconds, int rate = 16000) {
  return synthesize(SignalKind::sine, f, seconds, rate, 0);
}

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvariantViolation;
}

}  // namespace

TEST_CASE("frame_count") {
  CHECK(frame_count(400, 25, 10, 16000) == 1);
  CHECK(frame_count(560, 25, 10, 16000) == 2);
  CHECK(frame_count(16000, 25, 10, 16000) == 98);
  CHECK(error_of([] { frame_count(399, 25, 10, 16000); }) == Errc::TooShort);
}

TEST_CASE("fft matches a direct DFT") {
  Rng rng(3);
  std::vector<std::complex<double>> x(64);
  for (auto& v : x) v = {rng.uniform() - 0.5, rng.uniform() - 0.5};
  auto y = x;
  fft(y);
  for (std::size_t k = 0; k < x.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
      acc += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * n) / 64.0);
    }
    CHECK(std::abs(acc - y[k]) < 1e-12);
  }
}

TEST_CASE("power_spectrum basics") {
  CHECK(power_spectrum(std::vector<double>(8, 0.0), 8) == std::vector<double>(5, 0.0));
  std::vector<double> impulse(8, 0.0);
  impulse[0] = 1.0;
  for (double p : power_spectrum(impulse, 8, Window::rectangular)) CHECK(p == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(error_of([] { power_spectrum(std::vector<double>(6, 0.0), 6); }) == Errc::InvalidConfig);
}

TEST_CASE("1 kHz tone peaks at bin 32") {
  const auto x = tone(1000, 0.032);
  const std::span<const double> frame(x.samples.data(), 512);
  const auto p = power_spectrum(frame, 512);
  const auto peak = std::size_t(std::max_element(p.begin(), p.end()) - p.begin());
  std::vector<double> windowed(512);
  for (std::size_t i = 0; i < 512; ++i) {
    windowed[i] = frame[i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 511.0));
  }
  CHECK(peak == 32);
  CHECK(oracle::direct_dft_peak(windowed, 512) == peak);
  CHECK(p[32] == doctest::Approx(oracle::direct_dft_power(windowed, 512, 32)).epsilon(1e-9));
}

TEST_CASE("Parseval on random frames") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t fft_size = std::size_t(1) << (3 + rng.below(8));
    const std::size_t len = 1 + rng.below(fft_size);
    std::vector<double> frame(len);
    for (auto& v : frame) v = 2.0 * rng.uniform() - 1.0;
    const bool hann = trial % 2 == 0;
    double energy = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double w =
          !hann || len == 1 ? 1.0 : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / double(len - 1));
      energy += (frame[i] * w) * (frame[i] * w);
    }
    const auto p = power_spectrum(frame, fft_size, hann ? Window::hann : Window::rectangular);
    if (energy == 0.0) continue;
    CHECK(std::abs(spectrum_energy(p, fft_size) - energy) / energy < 1e-6);
  }
}

TEST_CASE("mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  for (double f : {20.0, 440.0, 3999.0, 7600.0}) CHECK(mel_to_hz(hz_to_mel(f)) == doctest::Approx(f));
  const MelFilterbankConfig cfg;
  const Matrix bank = mel_filterbank(cfg, 16000);
  CHECK(bank.rows() == 40);
  CHECK(bank.cols() == 257);
  for (std::size_t m = 0; m < bank.rows(); ++m) {
    double peak = 0.0;
    for (double w : bank.row(m)) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      peak = std::max(peak, w);
    }
    CHECK(peak > 0.0);
  }
}

TEST_CASE("mel config validation") {
  MelFilterbankConfig cfg;
  cfg.f_max_hz = 8001;
  CHECK(error_of([&] { validate(cfg, 16000); }) == Errc::InvalidConfig);
  cfg = {};
  cfg.n_mels = 1;
  CHECK(error_of([&] { validate(cfg, 16000); }) == Errc::InvalidConfig);
  cfg = {};
  cfg.fft_size = 300;
  CHECK(error_of([&] { validate(cfg, 16000); }) == Errc::InvalidConfig);
  CHECK_NOTHROW(validate(MelFilterbankConfig{}, 16000));
}

TEST_CASE("logmel of silence is the log floor") {
  const AudioBuffer silence{std::vector<double>(16000, 0.0), 16000};
  const auto f = logmel(silence, {});
  CHECK(f.num_frames() == 98);
  CHECK(f.dim() == 40);
  for (double v : f.values.data()) CHECK(v == std::log(1e-10));
}

TEST_CASE("logmel is deterministic") {
  const auto x = synthesize(SignalKind::white_noise, 0, 0.3, 16000, 4);
  CHECK(logmel(x, {}).values == logmel(x, {}).values);
}

TEST_CASE("logmel of a 1 kHz tone peaks in the band around 1 kHz") {
  // Triangle layout recomputed from the mel formula: evenly spaced mel points, band m spans
  // points m..m+2. The band with the largest weight at 1 kHz should carry the tone.
  const double lo = 2595.0 * std::log10(1.0 + 20.0 / 700.0);
  const double hi = 2595.0 * std::log10(1.0 + 7600.0 / 700.0);
  const double mel_1k = 2595.0 * std::log10(1.0 + 1000.0 / 700.0);
  const double step = (hi - lo) / 41.0;
  std::size_t expected = 0;
  double best = -1.0;
  for (std::size_t m = 0; m < 40; ++m) {
    const double left = lo + m * step;
    const double w = std::max(0.0, 1.0 - std::abs(mel_1k - (left + step)) / step);
    if (w > best) {
      best = w;
      expected = m;
    }
  }
  const auto f = logmel(tone(1000, 0.5), {});
  for (std::size_t t = 1; t + 1 < f.num_frames(); ++t) {
    const auto row = f.values.row(t);
    CHECK(std::size_t(std::max_element(row.begin(), row.end()) - row.begin()) == expected);
  }
}

TEST_CASE("logmel ignores short trailing padding") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    // 4000 samples leave 4000 - 400 = 3600 = 22 * 160 + 80 after the first window.
    auto x = synthesize(SignalKind::white_noise, 0, 0.25, 16000, std::uint64_t(trial));
    const auto base = logmel(x, {});
    const std::size_t pad = rng.below(80);
    for (std::size_t i = 0; i < pad; ++i) x.samples.push_back(rng.uniform() - 0.5);
    const auto padded = logmel(x, {});
    CHECK(padded.values == base.values);
  }
}

TEST_CASE("band_energy_ratio examples") {
  CHECK(band_energy_ratio(tone(1000, 1.0), 4000).high_fraction < 1e-4);
  CHECK(band_energy_ratio(tone(6000, 1.0), 4000).high_fraction > 0.99);
  const auto noise = synthesize(SignalKind::white_noise, 0, 2.0, 16000, 1);
  const double native = band_energy_ratio(noise, 4000).high_fraction;
  CHECK(native > 0.45);
  CHECK(native < 0.55);
  const auto band_limited = resample(resample(noise, 8000), 16000);
  CHECK(band_energy_ratio(band_limited, 4000).high_fraction < 0.01);

  const AudioBuffer silence{std::vector<double>(4000, 0.0), 16000};
  CHECK(band_energy_ratio(silence, 4000).high_fraction == 0.0);
  CHECK(error_of([] { band_energy_ratio(tone(1000, 0.1), 8000); }) == Errc::InvalidConfig);
  CHECK(error_of([] { band_energy_ratio(tone(1000, 0.1, 8000), 4000); }) == Errc::InvalidConfig);
}

TEST_CASE("band_energy_ratio is scale invariant") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = synthesize(SignalKind::white_noise, 0, 0.3, 16000, seed);
    const auto chirp = synthesize(SignalKind::chirp, 7000, 0.3, 16000, seed);
    for (std::size_t i = 0; i < x.samples.size(); ++i) x.samples[i] = 0.3 * x.samples[i] + chirp.samples[i];
    const double base = band_energy_ratio(x, 4000).high_fraction;
    for (double c : {1e-3, 0.5, 3.0, 1e4}) {
      auto y = x;
      for (auto& v : y.samples) v *= c;
      CHECK(std::abs(band_energy_ratio(y, 4000).high_fraction - base) < 1e-9);
    }
  }
}

TEST_CASE("down/up-sampled buffers lose the high band") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = synthesize(SignalKind::white_noise, 0, 0.5, 16000, seed);
    const auto hi_tone = synthesize(SignalKind::chirp, 7900, 0.5, 16000, 0);
    for (std::size_t i = 0; i < x.samples.size(); ++i) x.samples[i] += hi_tone.samples[i];
    CHECK(band_energy_ratio(resample(resample(x, 8000), 16000), 4000).high_fraction < 0.01);
  }
}

TEST_CASE("spectrogram export") {
  const AudioBuffer silence{std::vector<double>(800, 0.0), 16000};
  const auto csv = export_spectrogram(silence, {}, SpectrogramFormat::csv);
  const std::string text(csv.begin(), csv.end());
  const std::string floor_value = "-100.0000";
  std::size_t cells = 0;
  std::size_t rows = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',' || text[i] == '\n') {
      if (i > start) {
        CHECK(text.substr(start, i - start) == floor_value);
        ++cells;
      }
      if (i < text.size() && text[i] == '\n') ++rows;
      start = i + 1;
    }
  }
  CHECK(rows == 3);
  CHECK(cells == 3 * 257);

  const auto noise = synthesize(SignalKind::white_noise, 0, 0.5, 16000, 2);
  const auto pgm = export_spectrogram(noise, {}, SpectrogramFormat::pgm);
  const std::string header = "P5\n257 48\n255\n";
  REQUIRE(pgm.size() == header.size() + 257 * 48);
  CHECK(std::string(pgm.begin(), pgm.begin() + long(header.size())) == header);
}

TEST_CASE("band-limited spectrogram is far below native above 4 kHz") {
  const auto noise = synthesize(SignalKind::white_noise, 0, 1.0, 16000, 8);
  const auto limited = resample(resample(noise, 8000), 16000);
  const Matrix a = spectrogram_db(noise, {});
  const Matrix b = spectrogram_db(limited, {});
  double diff = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < a.rows(); ++t) {
    for (std::size_t k = 129; k < a.cols(); ++k) {
      diff += a(t, k) - b(t, k);
      ++n;
    }
  }
  CHECK(diff / double(n) > 30.0);
}
