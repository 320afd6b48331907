// Independent reference computations for the test suites. Nothing here calls
// into the library's DSP or loss code.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace oracle {

inline double direct_dft_power(std::span<const double> x, std::size_t n, std::size_t bin) {
  double re = 0.0;
  double im = 0.0;
  for (std::size_t i = 0; i < x.size() && i < n; ++i) {
    const double ang = -2.0 * std::numbers::pi * double(bin) * double(i) / double(n);
    re += x[i] * std::cos(ang);
    im += x[i] * std::sin(ang);
  }
  return re * re + im * im;
}

inline std::size_t direct_dft_peak(std::span<const double> x, std::size_t n) {
  std::size_t best = 0;
  double best_p = -1.0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double p = direct_dft_power(x, n, k);
    if (p > best_p) {
      best_p = p;
      best = k;
    }
  }
  return best;
}

// Least-squares amplitude of a sinusoid at freq_hz. Exact when x spans whole periods.
inline double tone_amplitude(std::span<const double> x, int rate_hz, double freq_hz) {
  double s = 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ph = 2.0 * std::numbers::pi * freq_hz * double(i) / rate_hz;
    s += x[i] * std::sin(ph);
    c += x[i] * std::cos(ph);
  }
  return 2.0 * std::hypot(s, c) / double(x.size());
}

inline double mean_square(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / double(x.size());
}

inline double rms_diff(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / double(a.size()));
}

inline double log_sum_exp(std::span<const double> v) {
  double m = -INFINITY;
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// -ln softmax(row)[label]
inline double nll(std::span<const double> row, std::size_t label) {
  return log_sum_exp(row) - row[label];
}

// Every path over V symbols of length T; paths collapsed and de-blanked give the emitted label.
inline double ctc_brute_force_prob(const std::vector<std::vector<double>>& probs,
                                   const std::vector<std::uint32_t>& target, std::uint32_t blank) {
  const std::size_t T = probs.size();
  const std::size_t V = probs[0].size();
  std::vector<std::size_t> path(T, 0);
  double total = 0.0;
  while (true) {
    std::vector<std::uint32_t> emitted;
    std::size_t prev = V;
    double p = 1.0;
    for (std::size_t t = 0; t < T; ++t) {
      p *= probs[t][path[t]];
      if (path[t] != prev && path[t] != blank) emitted.push_back(std::uint32_t(path[t]));
      prev = path[t];
    }
    if (emitted == target) total += p;
    std::size_t t = 0;
    while (t < T && ++path[t] == V) path[t++] = 0;
    if (t == T) break;
  }
  return total;
}

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("mbssl_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace oracle
