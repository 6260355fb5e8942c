#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfprune {

class InvalidSpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class RadarClass : std::uint8_t { P0N1 = 0, P0N2 = 1, Q3N1 = 2, Q3N2 = 3, Q3N3 = 4, Noise = 5 };

inline constexpr std::size_t kNumRadarClasses = 6;
inline constexpr std::array<RadarClass, kNumRadarClasses> kAllRadarClasses = {
    RadarClass::P0N1, RadarClass::P0N2, RadarClass::Q3N1, RadarClass::Q3N2, RadarClass::Q3N3, RadarClass::Noise};

inline const char* class_name(RadarClass c) {
  switch (c) {
    case RadarClass::P0N1: return "P0N#1";
    case RadarClass::P0N2: return "P0N#2";
    case RadarClass::Q3N1: return "Q3N#1";
    case RadarClass::Q3N2: return "Q3N#2";
    case RadarClass::Q3N3: return "Q3N#3";
    case RadarClass::Noise: return "Noise";
  }
  return "?";
}

inline RadarClass parse_radar_class(const std::string& s) {
  for (auto c : kAllRadarClasses)
    if (s == class_name(c)) return c;
  throw InvalidSpecError("unknown radar class '" + s + "'");
}

inline bool is_chirped(RadarClass c) {
  return c == RadarClass::Q3N1 || c == RadarClass::Q3N2 || c == RadarClass::Q3N3;
}

/// Sample rate of the synthetic records (1 MS/s): pulse timing is scaled so a
/// 128x128 STFT of 16384 samples resolves individual pulses.
inline constexpr double kDefaultSampleRate = 1.0e6;

/// Samples per STFT frame and frames per map.
inline constexpr std::size_t kStftWindow = 128;
inline constexpr std::size_t kStftFrames = 128;
inline constexpr std::size_t kRecordLength = kStftWindow * kStftFrames;

struct WaveformSpec {
  RadarClass class_label = RadarClass::Noise;
  double pulse_width = 0.0;            // seconds
  std::size_t pulses_per_burst = 0;
  double chirp_width = 0.0;            // Hz, zero for unmodulated pulses and noise
  double pulse_repetition_rate = 0.0;  // Hz
  double center_freq_offset = 0.0;     // Hz
  double snr_db = 20.0;

  double duty_cycle() const { return pulse_width * pulse_repetition_rate; }

  void validate(double sample_rate = kDefaultSampleRate) const {
    const bool noise = class_label == RadarClass::Noise;
    if (is_chirped(class_label) != (chirp_width > 0.0))
      throw InvalidSpecError(std::string(class_name(class_label)) +
                             (is_chirped(class_label) ? ": chirped class needs chirp_width > 0"
                                                      : ": chirp_width must be 0"));
    if (chirp_width < 0.0) throw InvalidSpecError("chirp_width must be >= 0");
    if (!std::isfinite(snr_db)) throw InvalidSpecError("snr_db must be finite");
    if (noise) return;
    if (!(pulse_width > 0.0) || !(pulse_repetition_rate > 0.0))
      throw InvalidSpecError("pulse_width and pulse_repetition_rate must be > 0");
    if (!(duty_cycle() < 1.0)) throw InvalidSpecError("duty cycle must be below 1");
    if (pulses_per_burst < 1) throw InvalidSpecError("pulses_per_burst must be >= 1");
    if (pulse_width * sample_rate < 1.0) throw InvalidSpecError("pulse shorter than one sample");
    if (std::abs(center_freq_offset) + chirp_width / 2.0 >= sample_rate / 2.0)
      throw InvalidSpecError("signal band exceeds the Nyquist range");
  }
};

struct IQRecord {
  std::vector<std::complex<double>> samples;
  double sample_rate = kDefaultSampleRate;
  WaveformSpec spec;
};

/// Clean signal, noise, and pulse-on mask behind one record.
struct SynthesisParts {
  std::vector<std::complex<double>> signal;
  std::vector<std::complex<double>> noise;
  std::vector<std::uint8_t> on;  // 1 where a pulse is being transmitted
};

/// Nominal per-class parameters. Orders of magnitude follow the published
/// CBRS radar bounds, rescaled to a 1 MS/s, 16.4 ms record.
inline WaveformSpec nominal_spec(RadarClass c, double snr_db = 20.0) {
  WaveformSpec s;
  s.class_label = c;
  s.snr_db = snr_db;
  switch (c) {
    case RadarClass::P0N1:
      s.pulse_width = 60e-6, s.pulse_repetition_rate = 1000.0, s.pulses_per_burst = 32;
      break;
    case RadarClass::P0N2:
      s.pulse_width = 250e-6, s.pulse_repetition_rate = 500.0, s.pulses_per_burst = 32;
      break;
    case RadarClass::Q3N1:
      s.pulse_width = 400e-6, s.pulse_repetition_rate = 400.0, s.pulses_per_burst = 32, s.chirp_width = 100e3;
      break;
    case RadarClass::Q3N2:
      s.pulse_width = 200e-6, s.pulse_repetition_rate = 700.0, s.pulses_per_burst = 32, s.chirp_width = 250e3;
      break;
    case RadarClass::Q3N3:
      s.pulse_width = 800e-6, s.pulse_repetition_rate = 300.0, s.pulses_per_burst = 32, s.chirp_width = 400e3;
      break;
    case RadarClass::Noise: break;
  }
  return s;
}

inline std::vector<WaveformSpec> nominal_class_specs(double snr_db = 20.0) {
  std::vector<WaveformSpec> v;
  for (auto c : kAllRadarClasses) v.push_back(nominal_spec(c, snr_db));
  return v;
}

/// Generates the components of one record. Noise is circular complex white
/// Gaussian with unit variance. Pulses start at a random offset inside the
/// first repetition interval; P0N pulses are unmodulated tones at the center
/// offset, Q3N pulses sweep linearly across chirp_width centered on it. The
/// signal amplitude is set from the realized noise power so the in-pulse SNR
/// equals spec.snr_db.
inline SynthesisParts synthesize_parts(const WaveformSpec& spec, std::size_t num_samples, std::uint64_t seed,
                                       double sample_rate = kDefaultSampleRate) {
  spec.validate(sample_rate);
  if (num_samples < kRecordLength)
    throw InvalidSpecError("num_samples must be >= " + std::to_string(kRecordLength));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  SynthesisParts parts;
  parts.noise.resize(num_samples);
  double noise_power = 0.0;
  for (auto& n : parts.noise) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    n = {re, im};
    noise_power += re * re + im * im;
  }
  noise_power /= double(num_samples);
  parts.signal.assign(num_samples, {0.0, 0.0});
  parts.on.assign(num_samples, 0);
  if (spec.class_label == RadarClass::Noise) return parts;

  const double period = sample_rate / spec.pulse_repetition_rate;  // samples
  const double width = spec.pulse_width * sample_rate;             // samples
  std::uniform_real_distribution<double> start_dist(0.0, period);
  std::uniform_real_distribution<double> phase_dist(-std::numbers::pi, std::numbers::pi);
  const double amplitude = std::sqrt(std::pow(10.0, spec.snr_db / 10.0) * noise_power);
  const double f0 = spec.center_freq_offset - spec.chirp_width / 2.0;  // Hz at pulse start
  const double sweep = spec.chirp_width / spec.pulse_width;           // Hz / s

  double start = start_dist(rng);
  for (std::size_t p = 0; p < spec.pulses_per_burst; ++p, start += period) {
    const auto first = std::size_t(std::ceil(start));
    if (first >= num_samples) break;
    const double phi0 = phase_dist(rng);
    for (std::size_t n = first; n < num_samples && double(n) < start + width; ++n) {
      const double t = (double(n) - start) / sample_rate;
      const double phase = phi0 + 2.0 * std::numbers::pi * (f0 * t + 0.5 * sweep * t * t);
      parts.signal[n] = amplitude * std::complex<double>(std::cos(phase), std::sin(phase));
      parts.on[n] = 1;
    }
  }
  return parts;
}

inline IQRecord synthesize(const WaveformSpec& spec, std::size_t num_samples, std::uint64_t seed,
                           double sample_rate = kDefaultSampleRate) {
  auto parts = synthesize_parts(spec, num_samples, seed, sample_rate);
  IQRecord rec;
  rec.sample_rate = sample_rate;
  rec.spec = spec;
  rec.samples.resize(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) rec.samples[i] = parts.signal[i] + parts.noise[i];
  return rec;
}

/// Per-example randomization applied around a nominal class spec.
struct Jitter {
  double pulse_width_rel = 0.2;   // width scaled by U(1 - r, 1 + r)
  double prr_rel = 0.15;
  double chirp_rel = 0.2;
  double center_offset_frac = 0.3;  // |offset| <= frac * sample_rate, shrunk to fit the band
};

inline WaveformSpec jitter_spec(const WaveformSpec& nominal, const Jitter& j, std::mt19937_64& rng,
                                double sample_rate = kDefaultSampleRate) {
  auto scaled = [&](double v, double rel) {
    std::uniform_real_distribution<double> d(1.0 - rel, 1.0 + rel);
    return v * d(rng);
  };
  WaveformSpec s = nominal;
  if (s.class_label == RadarClass::Noise) return s;
  s.pulse_width = scaled(s.pulse_width, j.pulse_width_rel);
  s.pulse_repetition_rate = scaled(s.pulse_repetition_rate, j.prr_rel);
  if (s.duty_cycle() >= 0.9) s.pulse_width = 0.9 / s.pulse_repetition_rate;
  if (s.chirp_width > 0.0) s.chirp_width = std::min(scaled(s.chirp_width, j.chirp_rel), 0.9 * sample_rate);
  const double max_off = std::max(0.0, std::min(j.center_offset_frac * sample_rate,
                                                0.45 * sample_rate - s.chirp_width / 2.0));
  std::uniform_real_distribution<double> off(-max_off, max_off);
  s.center_freq_offset = off(rng);
  return s;
}

}  // namespace rfprune
