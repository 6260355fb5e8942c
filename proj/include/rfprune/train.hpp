#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfprune/engine.hpp"

namespace rfprune {

/// A labeled input tensor (a time-frequency map for the radar task).
struct TFExample {
  FeatureMap tensor;
  std::size_t label = 0;
};

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  double momentum = 0.0;  // 0: plain SGD

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("learning_rate must be finite and non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  }
};

struct TrainResult {
  std::vector<double> loss_history;  // mean training loss per epoch
};

inline std::size_t argmax(std::span<const float> v) {
  return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::size_t predict(const NetworkGraph& model, const FeatureMap& input) {
  return argmax(forward(model, input).data);
}

/// Top-1 accuracy over a split.
inline double evaluate(const NetworkGraph& model, std::span<const TFExample> split) {
  if (split.empty()) throw std::invalid_argument("evaluate: empty split");
  std::size_t correct = 0;
  for (const auto& ex : split) correct += predict(model, ex.tensor) == ex.label ? 1 : 0;
  return double(correct) / double(split.size());
}

/// Applies param -= lr * grad / batch to every weight and bias.
inline void sgd_step(NetworkGraph& model, const Gradients& g, double lr, std::size_t batch) {
  const double scale = lr / double(batch);
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    if (auto* c = std::get_if<Conv>(&model.layers[li])) {
      const std::size_t K = c->depth() * c->kernel_h() * c->kernel_w();
      for (std::size_t f = 0; f < c->filters.size(); ++f) {
        auto& filt = c->filters[f];
        const double* gw = g.weights[li].data() + f * K;
        for (std::size_t k = 0; k < K; ++k) filt.weights[k] = float(double(filt.weights[k]) - scale * gw[k]);
        filt.bias = float(double(filt.bias) - scale * g.biases[li][f]);
      }
    } else if (auto* d = std::get_if<Dense>(&model.layers[li])) {
      for (std::size_t i = 0; i < d->weights.size(); ++i)
        d->weights[i] = float(double(d->weights[i]) - scale * g.weights[li][i]);
      for (std::size_t o = 0; o < d->outputs; ++o) d->bias[o] = float(double(d->bias[o]) - scale * g.biases[li][o]);
    }
  }
}

/// Heavy-ball update: velocity = momentum * velocity + grad / batch, then a
/// plain SGD step along the velocity.
inline void momentum_step(NetworkGraph& model, const Gradients& g, Gradients& velocity, double lr, double momentum,
                          std::size_t batch) {
  const double inv = 1.0 / double(batch);
  for (std::size_t li = 0; li < g.weights.size(); ++li) {
    for (std::size_t i = 0; i < g.weights[li].size(); ++i)
      velocity.weights[li][i] = momentum * velocity.weights[li][i] + inv * g.weights[li][i];
    for (std::size_t i = 0; i < g.biases[li].size(); ++i)
      velocity.biases[li][i] = momentum * velocity.biases[li][i] + inv * g.biases[li][i];
  }
  sgd_step(model, velocity, lr, 1);
}

/// Mini-batch SGD with a fixed learning rate (optional heavy-ball momentum,
/// velocity zeroed per call) and a per-epoch shuffle drawn from `cfg.seed`.
/// Deterministic for a given (model, data, cfg). Throws DivergenceError as
/// soon as a non-finite loss appears.
inline TrainResult train(NetworkGraph& model, std::span<const TFExample> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const std::size_t classes = model.num_classes();
  for (const auto& ex : data)
    if (ex.label >= classes) throw std::invalid_argument("train: label out of range");

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::vector<double> losses(data.size());
  std::mt19937_64 rng(cfg.seed);
  Gradients velocity = Gradients::zeros_like(model);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Gradients grads = Gradients::zeros_like(model);
      for (std::size_t b = start; b < end; ++b) {
        const auto& ex = data[order[b]];
        const auto cache = forward_cached(model, ex.tensor);
        const double loss = backward(model, cache, ex.label, grads);
        if (!std::isfinite(loss))
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
        losses[order[b]] = loss;
      }
      if (cfg.learning_rate > 0.0) momentum_step(model, grads, velocity, cfg.learning_rate, cfg.momentum, end - start);
    }
    // summed in example order so the value does not depend on the shuffle
    double total = 0.0;
    for (double l : losses) total += l;
    result.loss_history.push_back(total / double(data.size()));
    if (!std::isfinite(result.loss_history.back()))
      throw DivergenceError("non-finite mean loss at epoch " + std::to_string(epoch));
  }
  return result;
}

}  // namespace rfprune
