#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <variant>
#include <vector>

#include "rfprune/network.hpp"
#include "rfprune/plan.hpp"

namespace rfprune {

/// Multiply-accumulates of a conv layer producing `output`:
/// N_out * H_out * W_out * kh * kw * N_in.
template <typename T>
std::uint64_t conv_layer_flops(const BasicConv<T>& conv, const Shape& output) {
  if (conv.filters.empty()) throw ShapeError("conv layer has no filters");
  if (output.channels != conv.filters.size()) throw ShapeError("output shape does not match filter count");
  return std::uint64_t(output.channels) * output.height * output.width * conv.kernel_h() * conv.kernel_w() *
         conv.depth();
}

template <typename T>
std::uint64_t dense_layer_flops(const BasicDense<T>& dense) {
  return std::uint64_t(dense.inputs) * dense.outputs;
}

/// Trainable parameters of one layer, biases included.
template <typename T>
std::uint64_t layer_param_count(const BasicLayer<T>& layer) {
  if (const auto* c = std::get_if<BasicConv<T>>(&layer))
    return std::uint64_t(c->filters.size()) * c->depth() * c->kernel_h() * c->kernel_w() + c->filters.size();
  if (const auto* d = std::get_if<BasicDense<T>>(&layer)) return std::uint64_t(d->inputs) * d->outputs + d->outputs;
  return 0;
}

template <typename T>
std::uint64_t param_count(const BasicNetwork<T>& model) {
  std::uint64_t n = 0;
  for (const auto& l : model.layers) n += layer_param_count(l);
  return n;
}

/// Per-layer FLOPs (zero for parameter-free layers).
template <typename T>
std::vector<std::uint64_t> layer_flops(const BasicNetwork<T>& model) {
  const auto shapes = model.shapes();
  std::vector<std::uint64_t> out(model.layers.size(), 0);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (const auto* c = std::get_if<BasicConv<T>>(&model.layers[i])) out[i] = conv_layer_flops(*c, shapes[i + 1]);
    if (const auto* d = std::get_if<BasicDense<T>>(&model.layers[i])) out[i] = dense_layer_flops(*d);
  }
  return out;
}

template <typename T>
std::uint64_t model_flops(const BasicNetwork<T>& model) {
  std::uint64_t n = 0;
  for (auto f : layer_flops(model)) n += f;
  return n;
}

/// Positions 0..n-1 that survive removal of `removed`, in order.
inline std::vector<std::size_t> surviving_indices(std::size_t n, const std::set<std::size_t>& removed) {
  std::vector<std::size_t> keep;
  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!removed.count(i)) keep.push_back(i);
  return keep;
}

/// Expresses `later` (indices into the original model) in terms of the model
/// left after applying `earlier`. Indices already removed by `earlier` are an error.
inline PrunePlan remap_plan(const PrunePlan& later, const PrunePlan& earlier) {
  PrunePlan out = later;
  for (auto& [id, filters] : out.per_layer) {
    auto it = earlier.per_layer.find(id);
    if (it == earlier.per_layer.end()) continue;
    std::set<std::size_t> shifted;
    for (std::size_t f : filters) {
      if (it->second.count(f)) throw PlanError("filter " + std::to_string(f) + " already removed");
      std::size_t below = 0;
      for (std::size_t r : it->second) below += r < f ? 1 : 0;
      shifted.insert(f - below);
    }
    filters = std::move(shifted);
  }
  return out;
}

namespace detail {

template <typename T>
void remove_input_channels(BasicConv<T>& conv, const std::vector<std::size_t>& keep) {
  for (auto& f : conv.filters) {
    const std::size_t plane = f.kernel_h * f.kernel_w;
    std::vector<T> w;
    w.reserve(keep.size() * plane);
    for (std::size_t c : keep)
      w.insert(w.end(), f.weights.begin() + std::ptrdiff_t(c * plane), f.weights.begin() + std::ptrdiff_t((c + 1) * plane));
    f.weights = std::move(w);
    f.depth = keep.size();
  }
}

template <typename T>
void remove_input_channels(BasicDense<T>& dense, const std::vector<std::size_t>& keep, std::size_t spatial) {
  BasicDense<T> out(keep.size() * spatial, dense.outputs);
  out.bias = dense.bias;
  for (std::size_t o = 0; o < dense.outputs; ++o) {
    std::size_t col = 0;
    for (std::size_t c : keep)
      for (std::size_t s = 0; s < spatial; ++s) out.at(o, col++) = dense.at(o, c * spatial + s);
  }
  dense = std::move(out);
}

}  // namespace detail

/// Removes the planned filters and the input channels they fed. Channel
/// removal passes through ReLU, max-pool and flatten to the next conv (depth
/// slices) or dense layer (the columns that read the removed maps). Surviving
/// weights are copied unchanged. The input model is not modified.
template <typename T>
BasicNetwork<T> apply_prune(const BasicNetwork<T>& model, const PrunePlan& plan) {
  const auto shapes = model.shapes();
  BasicNetwork<T> out = model;
  for (const auto& [id, removed] : plan.per_layer) {
    if (removed.empty()) continue;
    if (id >= model.layers.size() || !std::holds_alternative<BasicConv<T>>(model.layers[id]))
      throw PlanError("layer " + std::to_string(id) + " is not a conv layer");
    const std::size_t n = model.conv(id).filters.size();
    if (*removed.rbegin() >= n)
      throw PlanError("filter index " + std::to_string(*removed.rbegin()) + " out of range for layer " +
                      std::to_string(id) + " with " + std::to_string(n) + " filters");
    if (removed.size() >= n) throw PlanError("plan would empty layer " + std::to_string(id));
    const auto keep = surviving_indices(n, removed);

    auto& conv = out.conv(id);
    std::vector<BasicFilter<T>> filters;
    filters.reserve(keep.size());
    for (std::size_t f : keep) filters.push_back(std::move(conv.filters[f]));
    conv.filters = std::move(filters);

    std::size_t j = id + 1;
    std::size_t spatial = shapes[j].spatial();
    bool consumed = false;
    for (; j < model.layers.size() && !consumed; ++j) {
      auto& layer = out.layers[j];
      if (auto* next = std::get_if<BasicConv<T>>(&layer)) {
        detail::remove_input_channels(*next, keep);
        consumed = true;
      } else if (auto* dense = std::get_if<BasicDense<T>>(&layer)) {
        if (dense->inputs != n * spatial) throw PlanError("dense layer " + std::to_string(j) + " input mismatch");
        detail::remove_input_channels(*dense, keep, spatial);
        consumed = true;
      } else if (std::holds_alternative<Softmax>(layer)) {
        break;
      } else if (!std::holds_alternative<Flatten>(layer)) {
        spatial = shapes[j + 1].spatial();
      }
    }
    if (!consumed) throw PlanError("conv layer " + std::to_string(id) + " has no downstream consumer to prune");
  }
  out.validate();
  return out;
}

struct CompressionReport {
  std::string approach;  // metric name, or "baseline"
  std::string strategy;
  double layer_pruning_pct = 0.0;
  std::uint64_t flops_base = 0, flops_pruned = 0;
  std::uint64_t params_base = 0, params_pruned = 0;
  double compression_pct = 0.0;
  double speedup = 1.0;
  double top1_accuracy = 0.0;  // fraction

  /// Checks the derived columns against the raw counts.
  void validate() const {
    if (flops_pruned == 0 || params_base == 0) throw std::invalid_argument("report has zero FLOPs or parameters");
    if (flops_pruned > flops_base || params_pruned > params_base)
      throw std::invalid_argument("pruned model is larger than the base model");
    const double sp = double(flops_base) / double(flops_pruned);
    const double cp = 100.0 * (1.0 - double(params_pruned) / double(params_base));
    if (std::abs(sp - speedup) > 1e-12 * sp) throw std::invalid_argument("speedup != flops_base / flops_pruned");
    if (std::abs(cp - compression_pct) > 1e-9) throw std::invalid_argument("compression_pct inconsistent");
    if (!(top1_accuracy >= 0.0 && top1_accuracy <= 1.0)) throw std::invalid_argument("accuracy outside [0, 1]");
  }
};

template <typename T>
CompressionReport compression_report(const BasicNetwork<T>& base, const BasicNetwork<T>& pruned, double accuracy,
                                     double p) {
  CompressionReport r;
  r.layer_pruning_pct = p;
  r.flops_base = model_flops(base);
  r.flops_pruned = model_flops(pruned);
  r.params_base = param_count(base);
  r.params_pruned = param_count(pruned);
  r.compression_pct = 100.0 * (1.0 - double(r.params_pruned) / double(r.params_base));
  r.speedup = double(r.flops_base) / double(r.flops_pruned);
  r.top1_accuracy = accuracy;
  return r;
}

inline constexpr const char* kReportCsvHeader =
    "approach,layer_pruning_pct,model_compression_pct,flops,trainable_params,speedup,top1_accuracy_pct,strategy";

inline std::string report_csv_row(const CompressionReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%llu,%llu,%.17g,%.17g,%s", r.approach.c_str(), r.layer_pruning_pct,
                r.compression_pct, static_cast<unsigned long long>(r.flops_pruned),
                static_cast<unsigned long long>(r.params_pruned), r.speedup, 100.0 * r.top1_accuracy,
                r.strategy.c_str());
  return buf;
}

}  // namespace rfprune
