#pragma once

// Experiment configuration: one JSON document describing dataset, model,
// training, saliency, schedule and matrix settings. Every field is optional;
// missing fields keep the defaults below.
//
// {
//   "output_dir": "runs/desk",
//   "seed": 0,
//   "workers": 1,
//   "dataset": {"per_class": 200, "snr_db": [20], "seed": 1,
//               "jitter": {"pulse_width_rel": 0.2, "prr_rel": 0.15, "chirp_rel": 0.2, "center_offset_frac": 0.3},
//               "classes": [{"class": "P0N#1", "pulse_width_s": 6e-5, "pulses_per_burst": 32,
//                            "chirp_width_hz": 0, "prr_hz": 1000, "center_freq_offset_hz": 0}, ...]},
//   "architecture": {"preset": "desk-vgg", "init_seed": 7}
//        or {"layers": [{"type": "conv", "filters": 8, "kernel": 3, "stride": 1, "padding": "same"},
//                       {"type": "relu"}, {"type": "maxpool", "window": 2, "stride": 2},
//                       {"type": "flatten"}, {"type": "dense", "units": 6}, {"type": "softmax"}]},
//   "train": {"epochs": 12, "batch_size": 2, "learning_rate": 0.01, "momentum": 0, "seed": 3},
//   "retrain": {"batch_size": 2, "learning_rate": 0.005, "epochs_low": 10, "epochs_high": 30,
//               "epoch_threshold_pct": 50},
//   "schedule": {"max_iters": 1000, "step_cap": 1},
//   "saliency": {"kmeans_k": 0, "apoz_samples": 0, "histogram_bins": 20},
//   "metrics": ["l1", "apoz", "kmeans"],
//   "strategies": ["setup-a", "setup-b-greedy"],
//   "prune_pcts": [5, 15, 30, 50, 70, 95]
// }

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfprune/dataset.hpp"
#include "rfprune/presets.hpp"
#include "rfprune/schedules.hpp"

namespace rfprune {

struct ExperimentSpec {
  std::filesystem::path output_dir = "runs/desk";
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  DatasetConfig dataset = [] {
    DatasetConfig d;
    d.per_class = 200;
    return d;
  }();

  std::string preset = "desk-vgg";
  std::vector<LayerSpec> layers;  // overrides the preset when non-empty
  std::uint64_t init_seed = 7;

  TrainConfig train{12, 2, 0.01, 3};
  std::size_t retrain_batch_size = 2;
  double retrain_learning_rate = 0.005;
  std::size_t retrain_epochs_low = 10;
  std::size_t retrain_epochs_high = 30;
  double epoch_threshold_pct = 50.0;
  std::size_t max_iters = 1000;
  std::size_t step_cap = 1;

  std::size_t kmeans_k = 0;
  std::size_t apoz_samples = 0;
  std::size_t histogram_bins = 20;

  std::vector<Metric> metrics = {Metric::L1Norm, Metric::APoZ, Metric::KMeansDist};
  std::vector<Strategy> strategies = {Strategy::IterativeMultiLayer, Strategy::OneShot};
  std::vector<double> prune_pcts = {5, 15, 30, 50, 70, 95};

  std::vector<LayerSpec> layer_specs() const {
    return layers.empty() ? preset_specs(preset, kNumRadarClasses) : layers;
  }

  NetworkGraph initial_model() const { return build_network(kTFMapShape, layer_specs(), init_seed); }

  ScheduleConfig schedule_config(Metric m, Strategy s, double p) const {
    ScheduleConfig c;
    c.strategy = s;
    c.metric = m;
    c.target_pct = p;
    c.max_iters = max_iters;
    c.step_cap = step_cap;
    c.retrain_epochs_low = retrain_epochs_low;
    c.retrain_epochs_high = retrain_epochs_high;
    c.epoch_threshold_pct = epoch_threshold_pct;
    c.train.batch_size = retrain_batch_size;
    c.train.learning_rate = retrain_learning_rate;
    c.saliency.kmeans_k = kmeans_k;
    c.saliency.apoz_samples = apoz_samples;
    c.seed = mix_seed(mix_seed(mix_seed(seed, std::size_t(m)), std::size_t(s)), std::uint64_t(p * 1000.0));
    c.saliency.seed = c.seed;
    return c;
  }

  void validate() const {
    if (metrics.empty()) throw std::invalid_argument("at least one metric is required");
    if (strategies.empty()) throw std::invalid_argument("at least one strategy is required");
    if (prune_pcts.empty()) throw std::invalid_argument("at least one pruning percentage is required");
    for (double p : prune_pcts)
      if (!(p > 0.0 && p < 100.0)) throw std::invalid_argument("pruning percentages must lie in (0, 100)");
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (histogram_bins < 1) throw std::invalid_argument("histogram_bins must be >= 1");
    train.validate();
    build_network(kTFMapShape, layer_specs(), init_seed, false).validate();
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "conv") {
    Padding pad = Padding::Same;
    if (j.contains("padding")) {
      const auto p = j.at("padding").get<std::string>();
      if (p == "valid") pad = Padding::Valid;
      else if (p != "same") throw std::invalid_argument("padding must be 'same' or 'valid'");
    }
    return LayerSpec::conv(j.at("filters").get<std::size_t>(), j.value("kernel", std::size_t(3)),
                           j.value("stride", std::size_t(1)), pad);
  }
  if (type == "relu") return LayerSpec::relu();
  if (type == "maxpool") return LayerSpec::maxpool(j.value("window", std::size_t(2)), j.value("stride", std::size_t(2)));
  if (type == "flatten") return LayerSpec::flatten();
  if (type == "dense") return LayerSpec::dense(j.at("units").get<std::size_t>());
  if (type == "softmax") return LayerSpec::softmax();
  throw std::invalid_argument("unknown layer type '" + type + "'");
}

inline nlohmann::json layer_spec_to_json(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::Conv:
      return {{"type", "conv"}, {"filters", s.filters}, {"kernel", s.kernel}, {"stride", s.stride},
              {"padding", s.padding == Padding::Same ? "same" : "valid"}};
    case LayerKind::ReLU: return {{"type", "relu"}};
    case LayerKind::MaxPool: return {{"type", "maxpool"}, {"window", s.window}, {"stride", s.stride}};
    case LayerKind::Flatten: return {{"type", "flatten"}};
    case LayerKind::Dense: return {{"type", "dense"}, {"units", s.filters}};
    case LayerKind::Softmax: return {{"type", "softmax"}};
  }
  return {};
}

}  // namespace detail

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  ExperimentSpec s;
  if (j.contains("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
  read_opt(j, "seed", s.seed);
  read_opt(j, "workers", s.workers);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    read_opt(d, "per_class", s.dataset.per_class);
    read_opt(d, "snr_db", s.dataset.snr_set);
    read_opt(d, "seed", s.dataset.seed);
    if (d.contains("jitter")) {
      const auto& jj = d.at("jitter");
      read_opt(jj, "pulse_width_rel", s.dataset.jitter.pulse_width_rel);
      read_opt(jj, "prr_rel", s.dataset.jitter.prr_rel);
      read_opt(jj, "chirp_rel", s.dataset.jitter.chirp_rel);
      read_opt(jj, "center_offset_frac", s.dataset.jitter.center_offset_frac);
    }
    if (d.contains("classes")) {
      s.dataset.class_specs.clear();
      for (const auto& c : d.at("classes")) {
        WaveformSpec w;
        w.class_label = parse_radar_class(c.at("class").get<std::string>());
        read_opt(c, "pulse_width_s", w.pulse_width);
        read_opt(c, "pulses_per_burst", w.pulses_per_burst);
        read_opt(c, "chirp_width_hz", w.chirp_width);
        read_opt(c, "prr_hz", w.pulse_repetition_rate);
        read_opt(c, "center_freq_offset_hz", w.center_freq_offset);
        s.dataset.class_specs.push_back(w);
      }
    }
  }
  if (j.contains("architecture")) {
    const auto& a = j.at("architecture");
    read_opt(a, "preset", s.preset);
    read_opt(a, "init_seed", s.init_seed);
    if (a.contains("layers"))
      for (const auto& l : a.at("layers")) s.layers.push_back(detail::layer_spec_from_json(l));
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    read_opt(t, "epochs", s.train.epochs);
    read_opt(t, "batch_size", s.train.batch_size);
    read_opt(t, "learning_rate", s.train.learning_rate);
    read_opt(t, "momentum", s.train.momentum);
    read_opt(t, "seed", s.train.seed);
  }
  if (j.contains("retrain")) {
    const auto& r = j.at("retrain");
    read_opt(r, "batch_size", s.retrain_batch_size);
    read_opt(r, "learning_rate", s.retrain_learning_rate);
    read_opt(r, "epochs_low", s.retrain_epochs_low);
    read_opt(r, "epochs_high", s.retrain_epochs_high);
    read_opt(r, "epoch_threshold_pct", s.epoch_threshold_pct);
  }
  if (j.contains("schedule")) {
    read_opt(j.at("schedule"), "max_iters", s.max_iters);
    read_opt(j.at("schedule"), "step_cap", s.step_cap);
  }
  if (j.contains("saliency")) {
    read_opt(j.at("saliency"), "kmeans_k", s.kmeans_k);
    read_opt(j.at("saliency"), "apoz_samples", s.apoz_samples);
    read_opt(j.at("saliency"), "histogram_bins", s.histogram_bins);
  }
  if (j.contains("metrics")) {
    s.metrics.clear();
    for (const auto& m : j.at("metrics")) s.metrics.push_back(parse_metric(m.get<std::string>()));
  }
  if (j.contains("strategies")) {
    s.strategies.clear();
    for (const auto& m : j.at("strategies")) s.strategies.push_back(parse_strategy(m.get<std::string>()));
  }
  read_opt(j, "prune_pcts", s.prune_pcts);
  s.validate();
  return s;
}

inline nlohmann::json spec_to_json(const ExperimentSpec& s) {
  using nlohmann::json;
  json classes = json::array();
  for (const auto& w : s.dataset.class_specs)
    classes.push_back({{"class", class_name(w.class_label)},
                       {"pulse_width_s", w.pulse_width},
                       {"pulses_per_burst", w.pulses_per_burst},
                       {"chirp_width_hz", w.chirp_width},
                       {"prr_hz", w.pulse_repetition_rate},
                       {"center_freq_offset_hz", w.center_freq_offset}});
  json arch = {{"init_seed", s.init_seed}};
  if (s.layers.empty()) {
    arch["preset"] = s.preset;
  } else {
    arch["layers"] = json::array();
    for (const auto& l : s.layers) arch["layers"].push_back(detail::layer_spec_to_json(l));
  }
  json metrics = json::array(), strategies = json::array();
  for (auto m : s.metrics) metrics.push_back(metric_name(m));
  for (auto st : s.strategies) strategies.push_back(strategy_name(st));
  return {{"output_dir", s.output_dir.string()},
          {"seed", s.seed},
          {"workers", s.workers},
          {"dataset",
           {{"per_class", s.dataset.per_class},
            {"snr_db", s.dataset.snr_set},
            {"seed", s.dataset.seed},
            {"jitter",
             {{"pulse_width_rel", s.dataset.jitter.pulse_width_rel},
              {"prr_rel", s.dataset.jitter.prr_rel},
              {"chirp_rel", s.dataset.jitter.chirp_rel},
              {"center_offset_frac", s.dataset.jitter.center_offset_frac}}},
            {"classes", classes}}},
          {"architecture", arch},
          {"train",
           {{"epochs", s.train.epochs},
            {"batch_size", s.train.batch_size},
            {"learning_rate", s.train.learning_rate},
            {"momentum", s.train.momentum},
            {"seed", s.train.seed}}},
          {"retrain",
           {{"batch_size", s.retrain_batch_size},
            {"learning_rate", s.retrain_learning_rate},
            {"epochs_low", s.retrain_epochs_low},
            {"epochs_high", s.retrain_epochs_high},
            {"epoch_threshold_pct", s.epoch_threshold_pct}}},
          {"schedule", {{"max_iters", s.max_iters}, {"step_cap", s.step_cap}}},
          {"saliency",
           {{"kmeans_k", s.kmeans_k}, {"apoz_samples", s.apoz_samples}, {"histogram_bins", s.histogram_bins}}},
          {"metrics", metrics},
          {"strategies", strategies},
          {"prune_pcts", s.prune_pcts}};
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  return spec_from_json(nlohmann::json::parse(is));
}

}  // namespace rfprune
