#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfprune/radarsynth.hpp"
#include "rfprune/rng.hpp"
#include "rfprune/serialize.hpp"
#include "rfprune/stft.hpp"

namespace rfprune {

/// Provenance of one generated example.
struct ExampleMeta {
  std::size_t label = 0;
  std::uint64_t seed = 0;
  WaveformSpec spec;
};

struct Split {
  std::vector<TFExample> examples;
  std::vector<ExampleMeta> meta;
  std::size_t size() const { return examples.size(); }
};

struct Dataset {
  Split train, val, test;
};

struct DatasetConfig {
  std::vector<WaveformSpec> class_specs = nominal_class_specs();  // one per class, in label order
  std::size_t per_class = 60;
  std::vector<double> snr_set = {20.0};
  std::uint64_t seed = 1;
  Jitter jitter;
  double sample_rate = kDefaultSampleRate;
};

/// Split sizes in the 4080 : 1800 : 2400 proportion (train and validation
/// rounded, test takes the remainder).
struct SplitSizes {
  std::size_t train, val, test;
};

inline SplitSizes split_sizes(std::size_t total) {
  const double denom = 4080.0 + 1800.0 + 2400.0;
  SplitSizes s;
  s.train = std::size_t(std::llround(double(total) * 4080.0 / denom));
  s.val = std::size_t(std::llround(double(total) * 1800.0 / denom));
  if (s.train + s.val > total) s.val = total - s.train;
  s.test = total - s.train - s.val;
  return s;
}

/// Generates per_class examples for every class and deals them into
/// train/val/test. Examples are interleaved class by class before the cut, so
/// each split is a contiguous run of a round-robin sequence and its class
/// histogram is balanced to within one. Every example has its own seed derived
/// from (seed, class, index); the same config always yields the same dataset.
inline Dataset build_dataset(const DatasetConfig& cfg) {
  if (cfg.per_class < 1) throw std::invalid_argument("per_class must be >= 1");
  if (cfg.class_specs.size() != kNumRadarClasses)
    throw std::invalid_argument("expected " + std::to_string(kNumRadarClasses) + " class specs");
  if (cfg.snr_set.empty()) throw std::invalid_argument("snr_set must not be empty");
  for (std::size_t c = 0; c < cfg.class_specs.size(); ++c) {
    if (std::size_t(cfg.class_specs[c].class_label) != c)
      throw std::invalid_argument("class_specs must be ordered by label");
    cfg.class_specs[c].validate(cfg.sample_rate);
  }

  const std::size_t total = cfg.per_class * kNumRadarClasses;
  const auto sizes = split_sizes(total);
  Dataset ds;
  for (std::size_t n = 0; n < total; ++n) {
    const std::size_t cls = n % kNumRadarClasses;
    const std::size_t idx = n / kNumRadarClasses;
    ExampleMeta meta;
    meta.label = cls;
    meta.seed = mix_seed(mix_seed(cfg.seed, cls), idx);
    std::mt19937_64 rng(mix_seed(meta.seed, 0xA11CE));
    meta.spec = jitter_spec(cfg.class_specs[cls], cfg.jitter, rng, cfg.sample_rate);
    meta.spec.snr_db = cfg.snr_set[std::uniform_int_distribution<std::size_t>(0, cfg.snr_set.size() - 1)(rng)];
    TFExample ex = stft_tfmap(synthesize(meta.spec, kRecordLength, meta.seed, cfg.sample_rate));
    Split& dst = n < sizes.train ? ds.train : (n < sizes.train + sizes.val ? ds.val : ds.test);
    dst.examples.push_back(std::move(ex));
    dst.meta.push_back(meta);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/<split>/index.csv plus one tensor file per example
// (serialize.hpp feature-map payload).

inline constexpr const char* kIndexHeader =
    "file,label,class,seed,pulse_width_s,pulses_per_burst,chirp_width_hz,prr_hz,center_freq_offset_hz,snr_db";

namespace detail {

inline std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace detail

inline std::string index_row(const std::string& file, const ExampleMeta& m) {
  std::ostringstream os;
  os << file << ',' << m.label << ',' << class_name(m.spec.class_label) << ',' << m.seed << ','
     << detail::fmt_real(m.spec.pulse_width) << ',' << m.spec.pulses_per_burst << ','
     << detail::fmt_real(m.spec.chirp_width) << ',' << detail::fmt_real(m.spec.pulse_repetition_rate) << ','
     << detail::fmt_real(m.spec.center_freq_offset) << ',' << detail::fmt_real(m.spec.snr_db);
  return os.str();
}

inline void write_split(const Split& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.csv", std::ios::trunc);
  if (!index) throw SerializationError("cannot write " + (dir / "index.csv").string());
  index << kIndexHeader << '\n';
  for (std::size_t i = 0; i < split.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.fmap", i);
    save_feature_map(split.examples[i].tensor, dir / name);
    index << index_row(name, split.meta[i]) << '\n';
  }
}

inline Split read_split(const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.csv");
  if (!index) throw SerializationError("missing dataset index " + (dir / "index.csv").string());
  std::string line;
  std::getline(index, line);
  if (line != kIndexHeader) throw SerializationError("unexpected index header in " + dir.string());
  Split split;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 10) throw SerializationError("malformed index row: " + line);
    ExampleMeta m;
    m.label = std::stoul(cells[1]);
    m.spec.class_label = parse_radar_class(cells[2]);
    m.seed = std::stoull(cells[3]);
    m.spec.pulse_width = std::stod(cells[4]);
    m.spec.pulses_per_burst = std::stoul(cells[5]);
    m.spec.chirp_width = std::stod(cells[6]);
    m.spec.pulse_repetition_rate = std::stod(cells[7]);
    m.spec.center_freq_offset = std::stod(cells[8]);
    m.spec.snr_db = std::stod(cells[9]);
    TFExample ex;
    ex.tensor = load_feature_map(dir / cells[0]);
    ex.label = m.label;
    split.examples.push_back(std::move(ex));
    split.meta.push_back(m);
  }
  return split;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  write_split(ds.train, dir / "train");
  write_split(ds.val, dir / "val");
  write_split(ds.test, dir / "test");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw SerializationError("no dataset at " + dir.string());
  return Dataset{read_split(dir / "train"), read_split(dir / "val"), read_split(dir / "test")};
}

/// Writes one channel as a binary (P5) 8-bit graymap, frequency rows top to bottom.
inline void write_pgm(const FeatureMap& map, std::size_t channel, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw SerializationError("cannot write " + path.string());
  os << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  for (float v : map.channel(channel)) {
    const auto px = static_cast<unsigned char>(std::lround(std::clamp(double(v), 0.0, 1.0) * 255.0));
    os.put(char(px));
  }
}

}  // namespace rfprune
