#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfprune/saliency.hpp"
#include "rfprune/serialize.hpp"
#include "rfprune/surgeon.hpp"
#include "rfprune/train.hpp"

namespace rfprune {

enum class Strategy { IterativeMultiLayer, LayerSequential, OneShot };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::IterativeMultiLayer: return "setup-a";
    case Strategy::LayerSequential: return "setup-b-seq";
    case Strategy::OneShot: return "setup-b-greedy";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "setup-a" || s == "IterativeMultiLayer") return Strategy::IterativeMultiLayer;
  if (s == "setup-b-seq" || s == "LayerSequential") return Strategy::LayerSequential;
  if (s == "setup-b-greedy" || s == "OneShot") return Strategy::OneShot;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

struct ScheduleConfig {
  Strategy strategy = Strategy::IterativeMultiLayer;
  Metric metric = Metric::L1Norm;
  double target_pct = 5.0;
  std::size_t max_iters = 1000;  // bound on prune steps
  std::size_t step_cap = 1;      // layer-sequential only
  std::size_t retrain_epochs_low = 10;
  std::size_t retrain_epochs_high = 30;
  double epoch_threshold_pct = 50.0;
  TrainConfig train;  // epochs field is ignored; the threshold rule decides
  SaliencyOptions saliency;
  std::vector<std::size_t> layer_order;  // layer-sequential visiting order; empty: graph order
  bool evaluate_steps = true;            // record test accuracy after every retrain
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (!(target_pct >= 0.0 && target_pct < 100.0)) throw std::invalid_argument("target_pct must be in [0, 100)");
    if (strategy == Strategy::LayerSequential && step_cap < 1) throw std::invalid_argument("step_cap must be >= 1");
    if (retrain_epochs_low < 1 || retrain_epochs_high < 1) throw std::invalid_argument("retrain epochs must be >= 1");
  }

  std::size_t retrain_epochs() const {
    return target_pct < epoch_threshold_pct ? retrain_epochs_low : retrain_epochs_high;
  }
};

struct ScheduleData {
  std::span<const TFExample> train;
  std::span<const TFExample> val;   // saliency sample (APoZ)
  std::span<const TFExample> test;  // reported accuracy
};

/// One prune step followed by its retrain.
struct TraceStep {
  std::optional<std::size_t> layer;  // set for layer-sequential steps
  std::size_t delta = 0;
  PrunePlan plan;  // indices into the model the step started from
  std::uint64_t saliency_source = 0;  // fingerprint of the model the saliency was computed on
  std::uint64_t pruned = 0;           // fingerprint right after surgery
  std::uint64_t retrained = 0;        // fingerprint after retraining
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::size_t retrain_epochs = 0;
  std::optional<double> accuracy;
};

struct ScheduleTrace {
  Strategy strategy = Strategy::IterativeMultiLayer;
  Metric metric = Metric::L1Norm;
  double target_pct = 0.0;
  std::map<std::size_t, std::size_t> targets;  // filters to remove per conv layer
  std::uint64_t baseline = 0;
  std::vector<TraceStep> steps;
  bool completed = false;
  std::string message;
  double final_accuracy = 0.0;

  std::size_t prune_events() const { return steps.size(); }
  std::size_t retrain_events() const {
    return std::size_t(std::count_if(steps.begin(), steps.end(), [](const auto& s) { return s.retrain_epochs > 0; }));
  }
};

struct ScheduleResult {
  NetworkGraph model;
  ScheduleTrace trace;
};

/// Filters per conv layer after the floor rule; keyed by layer id.
inline std::map<std::size_t, std::size_t> prune_targets(const NetworkGraph& model, double p) {
  std::map<std::size_t, std::size_t> t;
  for (std::size_t id : model.conv_layer_ids()) {
    const std::size_t n = model.conv(id).filters.size();
    const std::size_t c = prune_count(n, p);
    if (c >= n) throw PlanError("p = " + std::to_string(p) + " would empty layer " + std::to_string(id));
    t[id] = c;
  }
  return t;
}

namespace detail {

class ScheduleRun {
 public:
  ScheduleRun(const NetworkGraph& model, const ScheduleData& data, const ScheduleConfig& cfg, Strategy expected)
      : model_(model), data_(data), cfg_(cfg) {
    if (cfg.strategy != expected)
      throw std::invalid_argument(std::string("config strategy is ") + strategy_name(cfg.strategy) + ", expected " +
                                  strategy_name(expected));
    cfg.validate();
    if (data.train.empty() || data.test.empty()) throw std::invalid_argument("schedule needs train and test data");
    trace_.strategy = cfg.strategy;
    trace_.metric = cfg.metric;
    trace_.target_pct = cfg.target_pct;
    trace_.targets = prune_targets(model, cfg.target_pct);
    trace_.baseline = fingerprint(model);
    for (const auto& [id, n] : trace_.targets) remaining_[id] = n;
  }

  SaliencyTable saliency(const std::vector<std::size_t>& layers) const {
    SaliencyOptions opts = cfg_.saliency;
    opts.layers = layers;
    opts.seed = mix_seed(cfg_.seed, trace_.steps.size());
    return compute_saliency(model_, cfg_.metric, data_.val.empty() ? data_.train : data_.val, opts);
  }

  /// Prunes `plan` from the current model, retrains, and records the step.
  void step(PrunePlan plan, std::size_t delta, std::optional<std::size_t> layer) {
    TraceStep s;
    s.layer = layer;
    s.delta = delta;
    s.saliency_source = fingerprint(model_);
    plan.pruning_percentage = cfg_.target_pct;
    plan.step_size = delta;
    plan.step_cap = cfg_.strategy == Strategy::LayerSequential ? cfg_.step_cap : 0;
    model_ = apply_prune(model_, plan);
    for (const auto& [id, f] : plan.per_layer) remaining_[id] -= f.size();
    s.pruned = fingerprint(model_);
    s.params = param_count(model_);
    s.flops = model_flops(model_);
    s.retrain_epochs = cfg_.retrain_epochs();
    TrainConfig tc = cfg_.train;
    tc.epochs = s.retrain_epochs;
    tc.seed = mix_seed(cfg_.seed, 0x5EED0000 + trace_.steps.size());
    train(model_, data_.train, tc);
    s.retrained = fingerprint(model_);
    if (cfg_.evaluate_steps) s.accuracy = evaluate(model_, data_.test);
    s.plan = std::move(plan);
    trace_.steps.push_back(std::move(s));
  }

  bool budget_left() const { return trace_.steps.size() < cfg_.max_iters; }
  std::size_t remaining(std::size_t id) const { return remaining_.at(id); }
  bool all_done() const {
    return std::all_of(remaining_.begin(), remaining_.end(), [](const auto& kv) { return kv.second == 0; });
  }

  ScheduleResult finish() {
    trace_.completed = all_done();
    if (!trace_.completed)
      trace_.message = "target not reached within max_iters = " + std::to_string(cfg_.max_iters) + " prune steps";
    if (!trace_.steps.empty() && trace_.steps.back().accuracy)
      trace_.final_accuracy = *trace_.steps.back().accuracy;
    else
      trace_.final_accuracy = evaluate(model_, data_.test);
    return {std::move(model_), std::move(trace_)};
  }

  const ScheduleTrace& trace() const { return trace_; }

 private:
  NetworkGraph model_;
  ScheduleData data_;
  ScheduleConfig cfg_;
  ScheduleTrace trace_;
  std::map<std::size_t, std::size_t> remaining_;
};

}  // namespace detail

/// Iterative multi-layer schedule. The step size is the smallest non-zero
/// per-layer target; every step removes min(delta, remaining) filters from each
/// layer at once, retrains, and re-ranks from the retrained model.
inline ScheduleResult run_setup_a(const NetworkGraph& model, const ScheduleData& data, const ScheduleConfig& cfg) {
  detail::ScheduleRun run(model, data, cfg, Strategy::IterativeMultiLayer);
  std::size_t delta = 0;
  for (const auto& [_, n] : run.trace().targets)
    if (n > 0) delta = delta == 0 ? n : std::min(delta, n);

  while (!run.all_done() && run.budget_left()) {
    std::vector<std::size_t> layers;
    for (const auto& [id, _] : run.trace().targets)
      if (run.remaining(id) > 0) layers.push_back(id);
    const auto table = run.saliency(layers);
    PrunePlan plan;
    for (std::size_t id : layers) plan.per_layer[id] = most_prunable(table, id, std::min(delta, run.remaining(id)));
    run.step(std::move(plan), delta, std::nullopt);
  }
  return run.finish();
}

/// Layer-by-layer schedule: each layer is pruned min(remaining, step_cap)
/// filters at a time, retraining after every step, until its target is met.
inline ScheduleResult run_layer_sequential(const NetworkGraph& model, const ScheduleData& data,
                                           const ScheduleConfig& cfg) {
  detail::ScheduleRun run(model, data, cfg, Strategy::LayerSequential);
  std::vector<std::size_t> order = cfg.layer_order;
  if (order.empty())
    for (const auto& [id, _] : run.trace().targets) order.push_back(id);
  {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expected;
    for (const auto& [id, _] : run.trace().targets) expected.push_back(id);
    if (sorted != expected) throw std::invalid_argument("layer_order must be a permutation of the conv layers");
  }

  for (std::size_t id : order) {
    while (run.remaining(id) > 0 && run.budget_left()) {
      const std::size_t delta = std::min(run.remaining(id), cfg.step_cap);
      const auto table = run.saliency({id});
      PrunePlan plan;
      plan.per_layer[id] = most_prunable(table, id, delta);
      run.step(std::move(plan), delta, id);
    }
  }
  return run.finish();
}

/// Single prune of every layer's full target from the baseline ranking, then one retrain.
inline ScheduleResult run_oneshot(const NetworkGraph& model, const ScheduleData& data, const ScheduleConfig& cfg) {
  detail::ScheduleRun run(model, data, cfg, Strategy::OneShot);
  if (!run.all_done()) {
    std::vector<std::size_t> layers;
    for (const auto& [id, n] : run.trace().targets)
      if (n > 0) layers.push_back(id);
    const auto table = run.saliency(layers);
    PrunePlan plan;
    std::size_t delta = 0;
    for (std::size_t id : layers) {
      plan.per_layer[id] = most_prunable(table, id, run.remaining(id));
      delta = std::max(delta, run.remaining(id));
    }
    run.step(std::move(plan), delta, std::nullopt);
  }
  return run.finish();
}

inline ScheduleResult run_schedule(const NetworkGraph& model, const ScheduleData& data, const ScheduleConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::IterativeMultiLayer: return run_setup_a(model, data, cfg);
    case Strategy::LayerSequential: return run_layer_sequential(model, data, cfg);
    case Strategy::OneShot: return run_oneshot(model, data, cfg);
  }
  throw std::invalid_argument("unknown strategy");
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json to_json(const ScheduleTrace& t) {
  using nlohmann::json;
  json j;
  j["strategy"] = strategy_name(t.strategy);
  j["metric"] = metric_name(t.metric);
  j["target_pct"] = t.target_pct;
  j["baseline"] = hex64(t.baseline);
  json targets = json::object();
  for (const auto& [id, n] : t.targets) targets[std::to_string(id)] = n;
  j["targets"] = targets;
  json steps = json::array();
  for (const auto& s : t.steps) {
    json removed = json::object();
    for (const auto& [id, f] : s.plan.per_layer) removed[std::to_string(id)] = std::vector<std::size_t>(f.begin(), f.end());
    steps.push_back({{"layer", s.layer ? json(*s.layer) : json()},
                     {"delta", s.delta},
                     {"removed", removed},
                     {"saliency_source", hex64(s.saliency_source)},
                     {"pruned", hex64(s.pruned)},
                     {"retrained", hex64(s.retrained)},
                     {"params", s.params},
                     {"flops", s.flops},
                     {"retrain_epochs", s.retrain_epochs},
                     {"accuracy", s.accuracy ? json(*s.accuracy) : json()}});
  }
  j["steps"] = steps;
  j["completed"] = t.completed;
  j["message"] = t.message;
  j["final_accuracy"] = t.final_accuracy;
  return j;
}

}  // namespace rfprune
