#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "rfprune/kernels.hpp"
#include "rfprune/network.hpp"

namespace rfprune {

/// Per-layer state kept by a training forward pass.
template <typename T>
struct ForwardCache {
  std::vector<BasicFeatureMap<T>> activations;  // input of layer i; back() is the network output
  std::vector<std::vector<T>> cols;             // im2col matrices (conv layers only)
  std::vector<std::vector<std::uint32_t>> argmax;  // maxpool routing
  std::vector<double> logits;                    // softmax input, double precision
};

namespace detail {

template <typename T>
void softmax_inplace(BasicFeatureMap<T>& x, std::vector<double>* logits_out) {
  std::vector<double> z(x.data.begin(), x.data.end());
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  for (std::size_t i = 0; i < z.size(); ++i) x.data[i] = static_cast<T>(std::exp(z[i] - zmax) / sum);
  if (logits_out) *logits_out = std::move(z);
}

template <typename T>
BasicFeatureMap<T> layer_forward(const BasicLayer<T>& layer, const BasicFeatureMap<T>& in,
                                 ForwardCache<T>* cache, std::size_t idx, MacCounter* counter) {
  return std::visit(
      [&](const auto& l) -> BasicFeatureMap<T> {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, BasicConv<T>>) {
          return conv_forward(in, l, counter, cache ? &cache->cols[idx] : nullptr);
        } else if constexpr (std::is_same_v<L, ReLU>) {
          return relu_forward(in);
        } else if constexpr (std::is_same_v<L, MaxPool>) {
          return maxpool_forward(in, l, cache ? &cache->argmax[idx] : nullptr);
        } else if constexpr (std::is_same_v<L, Flatten>) {
          BasicFeatureMap<T> out = in;
          out.channels = in.size();
          out.height = out.width = 1;
          return out;
        } else if constexpr (std::is_same_v<L, BasicDense<T>>) {
          return dense_forward(in, l, counter);
        } else {
          BasicFeatureMap<T> out = in;
          softmax_inplace(out, cache ? &cache->logits : nullptr);
          return out;
        }
      },
      layer);
}

}  // namespace detail

/// Runs the whole stack and returns the final layer's output (class
/// probabilities when the network ends in Softmax).
template <typename T>
BasicFeatureMap<T> forward(const BasicNetwork<T>& model, const BasicFeatureMap<T>& input,
                           MacCounter* counter = nullptr) {
  if (input.shape() != model.input_shape)
    throw ShapeError("input shape " + input.shape().str() + " != model input " + model.input_shape.str());
  BasicFeatureMap<T> x = input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    try {
      x = detail::layer_forward<T>(model.layers[i], x, nullptr, i, counter);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return x;
}

template <typename T>
ForwardCache<T> forward_cached(const BasicNetwork<T>& model, const BasicFeatureMap<T>& input) {
  if (input.shape() != model.input_shape)
    throw ShapeError("input shape " + input.shape().str() + " != model input " + model.input_shape.str());
  ForwardCache<T> cache;
  cache.cols.resize(model.layers.size());
  cache.argmax.resize(model.layers.size());
  cache.activations.reserve(model.layers.size() + 1);
  cache.activations.push_back(input);
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    cache.activations.push_back(detail::layer_forward<T>(model.layers[i], cache.activations.back(), &cache, i, nullptr));
  return cache;
}

/// Gradient buffers mirroring a network's parameters, accumulated in double.
/// Conv weights are laid out [filter][depth*kh*kw]; dense weights [out][in].
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  template <typename T>
  static Gradients zeros_like(const BasicNetwork<T>& model) {
    Gradients g;
    g.weights.resize(model.layers.size());
    g.biases.resize(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      if (const auto* c = std::get_if<BasicConv<T>>(&model.layers[i])) {
        g.weights[i].assign(c->filters.size() * c->depth() * c->kernel_h() * c->kernel_w(), 0.0);
        g.biases[i].assign(c->filters.size(), 0.0);
      } else if (const auto* d = std::get_if<BasicDense<T>>(&model.layers[i])) {
        g.weights[i].assign(d->weights.size(), 0.0);
        g.biases[i].assign(d->bias.size(), 0.0);
      }
    }
    return g;
  }
};

/// Cross-entropy of the softmax output against `label`, from cached logits.
inline double cross_entropy(const std::vector<double>& logits, std::size_t label) {
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - zmax);
  return std::log(sum) + zmax - logits.at(label);
}

/// Reverse pass for softmax + cross-entropy. Adds parameter gradients into
/// `grads`; returns the loss. When `input_grad` is non-null it receives
/// dLoss/dInput.
template <typename T>
double backward(const BasicNetwork<T>& model, const ForwardCache<T>& cache, std::size_t label,
                Gradients& grads, std::vector<double>* input_grad = nullptr) {
  if (model.layers.empty() || !std::holds_alternative<Softmax>(model.layers.back()))
    throw ShapeError("backward requires a network ending in softmax");
  const std::size_t classes = cache.logits.size();
  if (label >= classes) throw std::out_of_range("label out of range");

  const double loss = cross_entropy(cache.logits, label);

  // dLoss/dlogits = p - onehot
  std::vector<double> delta(classes);
  {
    const double zmax = *std::max_element(cache.logits.begin(), cache.logits.end());
    double sum = 0.0;
    for (double v : cache.logits) sum += std::exp(v - zmax);
    for (std::size_t i = 0; i < classes; ++i) delta[i] = std::exp(cache.logits[i] - zmax) / sum;
    delta[label] -= 1.0;
  }

  const std::size_t stop = input_grad ? 0 : 1;
  std::vector<double> next;
  for (std::size_t li = model.layers.size() - 1; li-- > 0;) {
    const auto& in = cache.activations[li];
    const auto& layer = model.layers[li];
    const bool need_din = li >= stop;
    if (!need_din && !std::holds_alternative<BasicConv<T>>(layer) &&
        !std::holds_alternative<BasicDense<T>>(layer))
      break;

    if (const auto* d = std::get_if<BasicDense<T>>(&layer)) {
      auto& gw = grads.weights[li];
      auto& gb = grads.biases[li];
      for (std::size_t o = 0; o < d->outputs; ++o) {
        const double g = delta[o];
        gb[o] += g;
        double* row = gw.data() + o * d->inputs;
        for (std::size_t i = 0; i < d->inputs; ++i) row[i] += g * static_cast<double>(in.data[i]);
      }
      if (need_din) {
        next.assign(d->inputs, 0.0);
        for (std::size_t o = 0; o < d->outputs; ++o) {
          const double g = delta[o];
          const T* w = d->weights.data() + o * d->inputs;
          for (std::size_t i = 0; i < d->inputs; ++i) next[i] += g * static_cast<double>(w[i]);
        }
      }
    } else if (const auto* c = std::get_if<BasicConv<T>>(&layer)) {
      const auto& out = cache.activations[li + 1];
      const std::size_t F = c->filters.size();
      const std::size_t K = c->depth() * c->kernel_h() * c->kernel_w();
      const std::size_t P = out.height * out.width;
      const auto& col = cache.cols[li];
      auto& gb = grads.biases[li];
      for (std::size_t f = 0; f < F; ++f) {
        double s = 0.0;
        for (std::size_t p = 0; p < P; ++p) s += delta[f * P + p];
        gb[f] += s;
      }
      // dW (F x K) += dOut (F x P) * col^T (P x K)
      std::vector<T> col_t(P * K);
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t p = 0; p < P; ++p) col_t[p * K + k] = col[k * P + p];
      detail::gemm(F, K, P, delta.data(), P, col_t.data(), K, grads.weights[li].data(), K, nullptr, true);
      if (need_din) {
        // dCol (K x P) = W^T (K x F) * dOut (F x P)
        std::vector<T> w_t(K * F);
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t k = 0; k < K; ++k) w_t[k * F + f] = c->filters[f].weights[k];
        std::vector<double> dcol(K * P);
        detail::gemm(K, P, F, w_t.data(), F, delta.data(), P, dcol.data(), P, nullptr, false);
        const auto g = conv_geometry(in.shape(), c->kernel_h(), c->kernel_w(), c->stride, c->padding);
        detail::col2im(dcol, in.shape(), c->kernel_h(), c->kernel_w(), c->stride, g, next);
      }
    } else if (std::holds_alternative<ReLU>(layer)) {
      next = delta;
      for (std::size_t i = 0; i < next.size(); ++i)
        if (!(in.data[i] > T(0))) next[i] = 0.0;
    } else if (std::holds_alternative<MaxPool>(layer)) {
      next.assign(in.size(), 0.0);
      const auto& am = cache.argmax[li];
      for (std::size_t o = 0; o < am.size(); ++o) next[am[o]] += delta[o];
    } else if (std::holds_alternative<Flatten>(layer)) {
      next = delta;
    }
    if (!need_din) break;
    delta.swap(next);
  }
  if (input_grad) *input_grad = delta;
  return loss;
}

}  // namespace rfprune
