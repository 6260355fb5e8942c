#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "rfprune/engine.hpp"

namespace rfprune {

/// Conv layers whose output goes straight into a ReLU; their post-ReLU maps
/// are what activation-based saliency looks at.
template <typename T>
std::vector<std::size_t> conv_relu_layer_ids(const BasicNetwork<T>& model) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i + 1 < model.layers.size(); ++i)
    if (std::holds_alternative<BasicConv<T>>(model.layers[i]) && std::holds_alternative<ReLU>(model.layers[i + 1]))
      ids.push_back(i);
  return ids;
}

/// Forward pass that hands every layer's output to `visit(layer_id, output)`.
template <typename T, typename Visitor>
BasicFeatureMap<T> forward_visit(const BasicNetwork<T>& model, const BasicFeatureMap<T>& input, Visitor&& visit) {
  if (input.shape() != model.input_shape)
    throw ShapeError("input shape " + input.shape().str() + " != model input " + model.input_shape.str());
  BasicFeatureMap<T> x = input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    x = detail::layer_forward<T>(model.layers[i], x, nullptr, i, nullptr);
    visit(i, static_cast<const BasicFeatureMap<T>&>(x));
  }
  return x;
}

/// Post-ReLU activation maps of every conv+ReLU layer, one map per example
/// (channel f of a map is filter f's activation). Keyed by conv layer id.
inline std::map<std::size_t, std::vector<FeatureMap>> record_activations(const NetworkGraph& model,
                                                                        std::span<const FeatureMap> batch) {
  if (batch.empty()) throw std::invalid_argument("record_activations: empty batch");
  std::map<std::size_t, std::vector<FeatureMap>> out;
  const auto ids = conv_relu_layer_ids(model);
  for (std::size_t id : ids) out[id].reserve(batch.size());
  for (const auto& ex : batch) {
    forward_visit(model, ex, [&](std::size_t layer, const FeatureMap& y) {
      // layer is the ReLU right after a recorded conv
      if (layer > 0 && out.count(layer - 1) && std::holds_alternative<ReLU>(model.layers[layer]))
        out[layer - 1].push_back(y);
    });
  }
  return out;
}

}  // namespace rfprune
