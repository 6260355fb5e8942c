#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

#include "rfprune/radarsynth.hpp"
#include "rfprune/train.hpp"

namespace rfprune {

class SignalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

// FFTW planning is not thread-safe; execution on distinct arrays is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// Short-time Fourier transform with a rectangular window and hop == window,
/// over the first window*frames samples. Result is frame-major:
/// out[frame * window + bin], bins in natural DFT order (unnormalized).
inline std::vector<std::complex<double>> stft(const IQRecord& record, std::size_t window = kStftWindow,
                                              std::size_t frames = kStftFrames) {
  if (record.samples.size() < window * frames)
    throw SignalError("record has " + std::to_string(record.samples.size()) + " samples, need " +
                      std::to_string(window * frames));
  std::vector<std::complex<double>> out(window * frames);
  std::vector<std::complex<double>> in(window);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_1d(int(window), reinterpret_cast<fftw_complex*>(in.data()),
                            reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD, FFTW_ESTIMATE);
  }
  for (std::size_t f = 0; f < frames; ++f) {
    std::copy_n(record.samples.begin() + std::ptrdiff_t(f * window), window, in.begin());
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data() + f * window));
  }
  {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

/// Row of the TF map holding DFT bin `k`: rows run from -fs/2 (row 0) through
/// DC (row window/2) to just below +fs/2.
inline std::size_t tf_row_of_bin(std::size_t k, std::size_t window = kStftWindow) {
  return (k + window / 2) % window;
}

/// Rescales a channel to [0, 1]; a constant channel becomes all zeros.
inline void minmax_normalize(std::span<float> ch) {
  const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
  const double mn = *lo, mx = *hi;
  const double range = mx - mn;
  if (!(range > 1e-12 * std::max(1.0, std::abs(mx)))) {
    std::fill(ch.begin(), ch.end(), 0.0f);
    return;
  }
  for (auto& v : ch) v = float(std::clamp((double(v) - mn) / range, 0.0, 1.0));
}

/// Three-channel time-frequency map, 128 frequency rows by 128 time columns:
///   0: log(1 + |X|)                      log-magnitude spectrogram
///   1: 10 log10(|X|^2 / (N fs) + 1e-30)  periodogram PSD in dB/Hz
///   2: (arg X + pi) / (2 pi)             phase, unmasked even where |X| is tiny
/// each min-max normalized to [0, 1] independently. A channel with no spread
/// (the all-zero record, for instance) normalizes to all zeros.
inline TFExample stft_tfmap(const IQRecord& record) {
  const std::size_t W = kStftWindow, F = kStftFrames;
  const auto X = stft(record, W, F);
  TFExample ex;
  ex.label = std::size_t(record.spec.class_label);
  ex.tensor = FeatureMap(3, W, F);
  const double psd_scale = 1.0 / (double(W) * record.sample_rate);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t k = 0; k < W; ++k) {
      const auto v = X[f * W + k];
      const double mag = std::abs(v);
      const std::size_t row = tf_row_of_bin(k, W);
      ex.tensor.at(0, row, f) = float(std::log1p(mag));
      ex.tensor.at(1, row, f) = float(10.0 * std::log10(mag * mag * psd_scale + 1e-30));
      ex.tensor.at(2, row, f) = float((std::arg(v) + std::numbers::pi) / (2.0 * std::numbers::pi));
    }
  }
  for (std::size_t c = 0; c < 3; ++c) minmax_normalize(ex.tensor.channel(c));
  return ex;
}

}  // namespace rfprune
