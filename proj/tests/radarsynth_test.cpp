#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "rfprune/rfprune.hpp"

using namespace rfprune;

namespace {

using cd = std::complex<double>;

double mean_power(const std::vector<cd>& x) {
  double s = 0;
  for (auto v : x) s += std::norm(v);
  return s / double(x.size());
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rfprune_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

WaveformSpec pulsed(double width, double prr, double snr) {
  WaveformSpec s;
  s.class_label = RadarClass::P0N1;
  s.pulse_width = width;
  s.pulse_repetition_rate = prr;
  s.pulses_per_burst = 64;
  s.snr_db = snr;
  return s;
}

}  // namespace

TEST(Synthesize, NoiseHasUnitPowerAndNoPulses) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto parts = synthesize_parts(nominal_spec(RadarClass::Noise), kRecordLength, seed);
    for (auto on : parts.on) EXPECT_EQ(on, 0);
    for (auto v : parts.signal) EXPECT_EQ(v, cd(0, 0));
    const auto rec = synthesize(nominal_spec(RadarClass::Noise), kRecordLength, seed);
    EXPECT_NEAR(mean_power(rec.samples), 1.0, 0.05);
  }
}

TEST(Synthesize, PulsedDutyCycleByThresholdCount) {
  const auto spec = pulsed(100e-6, 1000.0, 30.0);
  ASSERT_NEAR(spec.duty_cycle(), 0.1, 1e-12);
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    const auto rec = synthesize(spec, kRecordLength, seed);
    // signal power is 1000x the noise: a threshold at 100 separates them
    std::size_t above = 0;
    for (auto v : rec.samples) above += std::norm(v) > 100.0 ? 1 : 0;
    EXPECT_NEAR(double(above) / double(rec.samples.size()), 0.1, 0.02);
  }
}

TEST(Synthesize, PulsedToneIsUnmodulated) {
  auto spec = pulsed(200e-6, 1000.0, 200.0);
  spec.center_freq_offset = 50e3;
  const auto rec = synthesize(spec, kRecordLength, 9);
  std::vector<double> f;
  for (std::size_t n = 0; n + 1 < rec.samples.size(); ++n)
    if (std::norm(rec.samples[n]) > 1e10 && std::norm(rec.samples[n + 1]) > 1e10)
      f.push_back(std::arg(rec.samples[n + 1] * std::conj(rec.samples[n])) * rec.sample_rate / (2 * std::numbers::pi));
  ASSERT_GT(f.size(), 1000u);
  for (double v : f) EXPECT_NEAR(v, 50e3, 1.0);
}

TEST(Synthesize, ChirpSpansChirpWidth) {
  for (auto cls : {RadarClass::Q3N1, RadarClass::Q3N2, RadarClass::Q3N3}) {
    auto spec = nominal_spec(cls, 30.0);
    const auto rec = synthesize(spec, kRecordLength, 21);
    // first complete pulse: a run of above-threshold samples not touching the record start
    std::size_t n = 0;
    while (n < rec.samples.size() && std::norm(rec.samples[n]) > 100.0) ++n;
    while (n < rec.samples.size() && std::norm(rec.samples[n]) <= 100.0) ++n;
    const std::size_t begin = n;
    while (n < rec.samples.size() && std::norm(rec.samples[n]) > 100.0) ++n;
    const std::size_t end = n;
    ASSERT_GT(end - begin, 50u);
    // least-squares line through the phase-difference frequency estimate
    double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
    for (std::size_t i = begin; i + 1 < end; ++i) {
      const double fi =
          std::arg(rec.samples[i + 1] * std::conj(rec.samples[i])) * rec.sample_rate / (2 * std::numbers::pi);
      const double t = double(i - begin) / rec.sample_rate;
      sx += t, sy += fi, sxx += t * t, sxy += t * fi, m += 1;
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    const double span = slope * double(end - begin) / rec.sample_rate;
    EXPECT_NEAR(span, spec.chirp_width, 0.1 * spec.chirp_width) << class_name(cls);
  }
}

TEST(Synthesize, InPulseSnrIsCalibrated) {
  for (auto cls : {RadarClass::P0N1, RadarClass::P0N2, RadarClass::Q3N1, RadarClass::Q3N2, RadarClass::Q3N3}) {
    for (double snr : {0.0, 10.0, 20.0}) {
      const auto parts = synthesize_parts(nominal_spec(cls, snr), kRecordLength, 33);
      double ps = 0, pn = 0, n = 0;
      for (std::size_t i = 0; i < parts.on.size(); ++i) {
        pn += std::norm(parts.noise[i]);
        if (parts.on[i]) ps += std::norm(parts.signal[i]), n += 1;
      }
      ASSERT_GT(n, 0);
      const double measured = 10 * std::log10((ps / n) / (pn / double(parts.on.size())));
      EXPECT_NEAR(measured, snr, 0.5) << class_name(cls);
    }
  }
}

TEST(Synthesize, DeterministicInSeed) {
  const auto spec = nominal_spec(RadarClass::Q3N2);
  EXPECT_EQ(synthesize(spec, kRecordLength, 7).samples, synthesize(spec, kRecordLength, 7).samples);
  EXPECT_NE(synthesize(spec, kRecordLength, 7).samples, synthesize(spec, kRecordLength, 8).samples);
}

TEST(Synthesize, RejectsInvalidSpecs) {
  EXPECT_THROW(synthesize(pulsed(1e-3, 1000.0, 20), kRecordLength, 1), InvalidSpecError);  // duty 1
  auto chirped_p0n = pulsed(50e-6, 1000.0, 20);
  chirped_p0n.chirp_width = 1e3;
  EXPECT_THROW(synthesize(chirped_p0n, kRecordLength, 1), InvalidSpecError);
  auto flat_q3n = nominal_spec(RadarClass::Q3N1);
  flat_q3n.chirp_width = 0;
  EXPECT_THROW(synthesize(flat_q3n, kRecordLength, 1), InvalidSpecError);
  auto noisy_chirp = nominal_spec(RadarClass::Noise);
  noisy_chirp.chirp_width = 10;
  EXPECT_THROW(synthesize(noisy_chirp, kRecordLength, 1), InvalidSpecError);
  auto wide = nominal_spec(RadarClass::Q3N3);
  wide.center_freq_offset = 400e3;
  EXPECT_THROW(synthesize(wide, kRecordLength, 1), InvalidSpecError);
  EXPECT_THROW(parse_radar_class("Q9N9"), InvalidSpecError);
}

TEST(Stft, PureToneConcentratesInOneRow) {
  for (std::size_t k : {0u, 5u, 64u, 100u, 127u}) {
    IQRecord rec;
    rec.samples.resize(kRecordLength);
    for (std::size_t n = 0; n < kRecordLength; ++n)
      rec.samples[n] = std::polar(1.0, 2 * std::numbers::pi * double(k) * double(n % kStftWindow) / kStftWindow);
    const auto ex = stft_tfmap(rec);
    const std::size_t row = (k + 64) % 128;
    for (std::size_t f = 0; f < 128; f += 17) {
      double total = 0, in_row = 0;
      for (std::size_t r = 0; r < 128; ++r) {
        const double e = double(ex.tensor.at(0, r, f)) * ex.tensor.at(0, r, f);
        total += e;
        if (r == row) in_row = e;
      }
      EXPECT_GE(in_row, 0.9 * total) << "bin " << k;
    }
  }
}

TEST(Stft, ParsevalEnergy) {
  const auto rec = synthesize(nominal_spec(RadarClass::Q3N1), kRecordLength, 2);
  const auto X = stft(rec);
  double freq = 0, time = 0;
  for (auto v : X) freq += std::norm(v);
  for (std::size_t n = 0; n < kStftWindow * kStftFrames; ++n) time += std::norm(rec.samples[n]);
  EXPECT_NEAR(freq / (kStftWindow * time), 1.0, 0.01);
}

TEST(Stft, ZeroRecordGivesZeroMagnitudeChannel) {
  IQRecord rec;
  rec.samples.assign(kRecordLength, cd(0, 0));
  const auto ex = stft_tfmap(rec);
  for (float v : ex.tensor.channel(0)) EXPECT_EQ(v, 0.0f);
}

TEST(Stft, OutputShapeAndRange) {
  for (auto cls : kAllRadarClasses) {
    const auto ex = stft_tfmap(synthesize(nominal_spec(cls), kRecordLength, 4));
    EXPECT_EQ(ex.tensor.shape(), (Shape{3, 128, 128}));
    EXPECT_EQ(ex.label, std::size_t(cls));
    for (float v : ex.tensor.data) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Stft, RejectsShortRecord) {
  IQRecord rec;
  rec.samples.assign(kRecordLength - 1, cd(1, 0));
  EXPECT_THROW(stft_tfmap(rec), SignalError);
}

TEST(Dataset, SplitSizesFollowRatio) {
  const double denom = 4080.0 + 1800.0 + 2400.0;
  for (std::size_t total : {6u, 60u, 360u, 1200u, 8280u}) {
    const auto s = split_sizes(total);
    EXPECT_EQ(s.train + s.val + s.test, total);
    EXPECT_NEAR(double(s.train), total * 4080.0 / denom, 1.0);
    EXPECT_NEAR(double(s.val), total * 1800.0 / denom, 1.0);
    EXPECT_NEAR(double(s.test), total * 2400.0 / denom, 1.0);
  }
  const auto s = split_sizes(360);
  EXPECT_NEAR(double(s.train), 176, 1);
  EXPECT_NEAR(double(s.val), 78, 1);
  EXPECT_NEAR(double(s.test), 106, 1);
}

TEST(Dataset, BalancedDeterministicDisjoint) {
  DatasetConfig cfg;
  cfg.per_class = 12;
  cfg.seed = 5;
  const auto a = build_dataset(cfg);
  const auto b = build_dataset(cfg);
  std::set<std::uint64_t> seeds;
  std::size_t total = 0;
  for (const Split* s : {&a.train, &a.val, &a.test}) {
    std::array<std::size_t, 6> hist{};
    for (const auto& ex : s->examples) ++hist[ex.label];
    const auto [lo, hi] = std::minmax_element(hist.begin(), hist.end());
    EXPECT_LE(*hi - *lo, 1u);
    for (const auto& m : s->meta) seeds.insert(m.seed);
    total += s->size();
  }
  EXPECT_EQ(total, 72u);
  EXPECT_EQ(seeds.size(), 72u);
  for (auto [x, y] : {std::pair{&a.train, &b.train}, {&a.val, &b.val}, {&a.test, &b.test}}) {
    ASSERT_EQ(x->size(), y->size());
    for (std::size_t i = 0; i < x->size(); ++i) EXPECT_EQ(x->examples[i].tensor, y->examples[i].tensor);
  }
  cfg.seed = 6;
  EXPECT_NE(build_dataset(cfg).train.examples[0].tensor, a.train.examples[0].tensor);
}

TEST(Dataset, SnrSetIsRespected) {
  DatasetConfig cfg;
  cfg.per_class = 6;
  cfg.snr_set = {0.0, 10.0};
  const auto ds = build_dataset(cfg);
  for (const Split* s : {&ds.train, &ds.val, &ds.test})
    for (const auto& m : s->meta) EXPECT_TRUE(m.spec.snr_db == 0.0 || m.spec.snr_db == 10.0);
}

TEST(Dataset, RejectsBadConfig) {
  DatasetConfig cfg;
  cfg.per_class = 0;
  EXPECT_THROW(build_dataset(cfg), std::invalid_argument);
  cfg.per_class = 1;
  cfg.class_specs.pop_back();
  EXPECT_THROW(build_dataset(cfg), std::invalid_argument);
}

TEST(Dataset, NearestCentroidSeparatesClasses) {
  DatasetConfig cfg;
  cfg.per_class = 30;
  cfg.seed = 11;
  const auto ds = build_dataset(cfg);
  const std::size_t P = 128 * 128;
  std::vector<std::vector<double>> centroid(6, std::vector<double>(P, 0.0));
  std::array<double, 6> count{};
  for (const auto& ex : ds.train.examples) {
    auto ch = ex.tensor.channel(0);
    for (std::size_t i = 0; i < P; ++i) centroid[ex.label][i] += ch[i];
    count[ex.label] += 1;
  }
  for (std::size_t c = 0; c < 6; ++c)
    for (auto& v : centroid[c]) v /= count[c];
  std::size_t correct = 0;
  for (const auto& ex : ds.test.examples) {
    auto ch = ex.tensor.channel(0);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < 6; ++c) {
      double d = 0;
      for (std::size_t i = 0; i < P; ++i) d += (ch[i] - centroid[c][i]) * (ch[i] - centroid[c][i]);
      if (d < best_d) best_d = d, best = c;
    }
    correct += best == ex.label;
  }
  EXPECT_GE(double(correct) / double(ds.test.size()), 0.5);
}

TEST(Dataset, DiskRoundTripAndGraymap) {
  DatasetConfig cfg;
  cfg.per_class = 3;
  const auto ds = build_dataset(cfg);
  const auto dir = temp_dir("ds");
  write_dataset(ds, dir);
  const auto back = read_dataset(dir);
  for (auto [x, y] : {std::pair{&ds.train, &back.train}, {&ds.val, &back.val}, {&ds.test, &back.test}}) {
    ASSERT_EQ(x->size(), y->size());
    for (std::size_t i = 0; i < x->size(); ++i) {
      EXPECT_EQ(x->examples[i].tensor, y->examples[i].tensor);
      EXPECT_EQ(x->examples[i].label, y->examples[i].label);
      EXPECT_EQ(index_row("f", x->meta[i]), index_row("f", y->meta[i]));
    }
  }
  write_pgm(ds.train.examples[0].tensor, 0, dir / "x.pgm");
  std::ifstream is(dir / "x.pgm", std::ios::binary);
  std::string magic;
  std::size_t w, h, maxv;
  is >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, 128u);
  EXPECT_EQ(h, 128u);
  EXPECT_EQ(maxv, 255u);
  EXPECT_EQ(std::filesystem::file_size(dir / "x.pgm"), 15u + 128u * 128u);
  EXPECT_THROW(read_dataset(dir / "nope"), SerializationError);
  std::filesystem::remove_all(dir);
}
