#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "rfprune/tensor.hpp"

namespace rfprune {

enum class Padding : std::uint8_t { Valid = 0, Same = 1 };

/// Convolution over a channel-major feature map. All filters share one geometry.
template <typename T>
struct BasicConv {
  std::vector<BasicFilter<T>> filters;
  std::size_t stride = 1;
  Padding padding = Padding::Valid;

  std::size_t depth() const { return filters.empty() ? 0 : filters.front().depth; }
  std::size_t kernel_h() const { return filters.empty() ? 0 : filters.front().kernel_h; }
  std::size_t kernel_w() const { return filters.empty() ? 0 : filters.front().kernel_w; }

  friend bool operator==(const BasicConv&, const BasicConv&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

struct MaxPool {
  std::size_t window = 2;
  std::size_t stride = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

/// Fully connected layer; weights are row-major (outputs x inputs).
template <typename T>
struct BasicDense {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  BasicDense() = default;
  BasicDense(std::size_t in, std::size_t out)
      : inputs(in), outputs(out), weights(in * out, T(0)), bias(out, T(0)) {}

  T& at(std::size_t o, std::size_t i) { return weights[o * inputs + i]; }
  const T& at(std::size_t o, std::size_t i) const { return weights[o * inputs + i]; }

  friend bool operator==(const BasicDense&, const BasicDense&) = default;
};

/// Only valid as the final layer; training pairs it with cross-entropy.
struct Softmax {
  friend bool operator==(const Softmax&, const Softmax&) = default;
};

template <typename T>
using BasicLayer = std::variant<BasicConv<T>, ReLU, MaxPool, Flatten, BasicDense<T>, Softmax>;

enum class LayerKind : std::uint8_t { Conv = 1, ReLU = 2, MaxPool = 3, Flatten = 4, Dense = 5, Softmax = 6 };

template <typename T>
LayerKind kind_of(const BasicLayer<T>& layer) {
  return static_cast<LayerKind>(layer.index() + 1);
}

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

/// Output spatial geometry of a convolution, including the zero-padding applied
/// before the top-left corner. 'same' follows the usual ceil(in / stride) rule
/// with any odd padding placed at the bottom/right.
struct ConvGeometry {
  std::size_t out_h = 0, out_w = 0;
  std::size_t pad_top = 0, pad_left = 0;
  std::size_t padded_h = 0, padded_w = 0;
};

inline ConvGeometry conv_geometry(const Shape& in, std::size_t kh, std::size_t kw,
                                  std::size_t stride, Padding padding) {
  if (stride == 0) throw ShapeError("conv stride must be >= 1");
  if (kh == 0 || kw == 0) throw ShapeError("conv kernel must be non-empty");
  ConvGeometry g;
  if (padding == Padding::Valid) {
    if (in.height < kh || in.width < kw)
      throw ShapeError("conv input " + in.str() + " smaller than kernel " + std::to_string(kh) +
                       "x" + std::to_string(kw));
    g.out_h = (in.height - kh) / stride + 1;
    g.out_w = (in.width - kw) / stride + 1;
  } else {
    if (in.height == 0 || in.width == 0) throw ShapeError("conv input has empty spatial dims");
    g.out_h = (in.height + stride - 1) / stride;
    g.out_w = (in.width + stride - 1) / stride;
    const std::size_t need_h = (g.out_h - 1) * stride + kh;
    const std::size_t need_w = (g.out_w - 1) * stride + kw;
    g.pad_top = need_h > in.height ? (need_h - in.height) / 2 : 0;
    g.pad_left = need_w > in.width ? (need_w - in.width) / 2 : 0;
  }
  g.padded_h = (g.out_h - 1) * stride + kh;
  g.padded_w = (g.out_w - 1) * stride + kw;
  return g;
}

template <typename T>
Shape conv_output_shape(const BasicConv<T>& l, const Shape& in) {
  if (l.filters.empty()) throw ShapeError("conv layer has no filters");
  const auto& f0 = l.filters.front();
  for (const auto& f : l.filters) {
    if (f.depth != f0.depth || f.kernel_h != f0.kernel_h || f.kernel_w != f0.kernel_w)
      throw ShapeError("conv filters do not share one geometry");
    if (f.weights.size() != f.volume()) throw ShapeError("filter weight length mismatch");
  }
  if (f0.depth != in.channels)
    throw ShapeError("conv filter depth " + std::to_string(f0.depth) + " != input channels " +
                     std::to_string(in.channels));
  const auto g = conv_geometry(in, f0.kernel_h, f0.kernel_w, l.stride, l.padding);
  return {l.filters.size(), g.out_h, g.out_w};
}

inline Shape maxpool_output_shape(const MaxPool& l, const Shape& in) {
  if (l.window == 0 || l.stride == 0) throw ShapeError("maxpool window/stride must be >= 1");
  if (in.height < l.window || in.width < l.window)
    throw ShapeError("maxpool input " + in.str() + " smaller than window");
  return {in.channels, (in.height - l.window) / l.stride + 1, (in.width - l.window) / l.stride + 1};
}

template <typename T>
Shape layer_output_shape(const BasicLayer<T>& layer, const Shape& in) {
  return std::visit(
      [&](const auto& l) -> Shape {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, BasicConv<T>>) {
          return conv_output_shape(l, in);
        } else if constexpr (std::is_same_v<L, MaxPool>) {
          return maxpool_output_shape(l, in);
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return {in.size(), 1, 1};
        } else if constexpr (std::is_same_v<L, BasicDense<T>>) {
          if (in.size() != l.inputs)
            throw ShapeError("dense expects " + std::to_string(l.inputs) + " inputs, got " +
                             std::to_string(in.size()));
          if (l.weights.size() != l.inputs * l.outputs || l.bias.size() != l.outputs)
            throw ShapeError("dense weight/bias length mismatch");
          return {l.outputs, 1, 1};
        } else {
          return in;
        }
      },
      layer);
}

/// Ordered layer stack with a fixed input shape. Layer ids used throughout the
/// library are positions in `layers`; pruning never removes layers, so ids are
/// stable across surgery.
template <typename T>
struct BasicNetwork {
  Shape input_shape;
  std::vector<BasicLayer<T>> layers;

  /// Input shape of every layer followed by the final output shape
  /// (size layers.size() + 1). Throws ShapeError on any incompatibility.
  std::vector<Shape> shapes() const {
    std::vector<Shape> s;
    s.reserve(layers.size() + 1);
    s.push_back(input_shape);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (std::holds_alternative<Softmax>(layers[i]) && i + 1 != layers.size())
        throw ShapeError("softmax must be the final layer");
      try {
        s.push_back(layer_output_shape(layers[i], s.back()));
      } catch (const ShapeError& e) {
        throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
      }
    }
    return s;
  }

  void validate() const { (void)shapes(); }

  std::size_t num_classes() const { return shapes().back().size(); }

  std::vector<std::size_t> conv_layer_ids() const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (std::holds_alternative<BasicConv<T>>(layers[i])) ids.push_back(i);
    return ids;
  }

  const BasicConv<T>& conv(std::size_t id) const { return std::get<BasicConv<T>>(layers.at(id)); }
  BasicConv<T>& conv(std::size_t id) { return std::get<BasicConv<T>>(layers.at(id)); }

  template <typename U>
  BasicNetwork<U> cast() const {
    BasicNetwork<U> out;
    out.input_shape = input_shape;
    for (const auto& layer : layers) {
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, BasicConv<T>>) {
              BasicConv<U> c;
              c.stride = l.stride;
              c.padding = l.padding;
              for (const auto& f : l.filters) c.filters.push_back(f.template cast<U>());
              out.layers.emplace_back(std::move(c));
            } else if constexpr (std::is_same_v<L, BasicDense<T>>) {
              BasicDense<U> d(l.inputs, l.outputs);
              for (std::size_t i = 0; i < l.weights.size(); ++i) d.weights[i] = static_cast<U>(l.weights[i]);
              for (std::size_t i = 0; i < l.bias.size(); ++i) d.bias[i] = static_cast<U>(l.bias[i]);
              out.layers.emplace_back(std::move(d));
            } else {
              out.layers.emplace_back(l);
            }
          },
          layer);
    }
    return out;
  }

  friend bool operator==(const BasicNetwork&, const BasicNetwork&) = default;
};

using Conv = BasicConv<float>;
using Dense = BasicDense<float>;
using Layer = BasicLayer<float>;
using NetworkGraph = BasicNetwork<float>;

// ---------------------------------------------------------------------------
// Construction helpers

/// Declarative layer description used by presets and config files.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t filters = 0;  // conv: filter count; dense: output units
  std::size_t kernel = 3;
  std::size_t stride = 1;   // conv and maxpool
  std::size_t window = 2;   // maxpool
  Padding padding = Padding::Same;

  static LayerSpec conv(std::size_t n, std::size_t k = 3, std::size_t stride = 1,
                        Padding pad = Padding::Same) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.filters = n;
    s.kernel = k;
    s.stride = stride;
    s.padding = pad;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{}; }
  static LayerSpec maxpool(std::size_t window, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.window = window;
    s.stride = stride;
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
  }
  static LayerSpec dense(std::size_t units) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.filters = units;
    return s;
  }
  static LayerSpec softmax() {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
  }
};

/// Builds a network from layer specs. Weights use the Glorot-uniform rule
/// U(-sqrt(6/(fan_in+fan_out)), +sqrt(...)); biases start at zero. With
/// `initialize == false` all weights stay zero (accounting-only models).
inline NetworkGraph build_network(const Shape& input, const std::vector<LayerSpec>& specs,
                                  std::uint64_t seed, bool initialize = true) {
  NetworkGraph net;
  net.input_shape = input;
  std::mt19937_64 rng(seed);
  Shape cur = input;
  for (const auto& s : specs) {
    switch (s.kind) {
      case LayerKind::Conv: {
        Conv c;
        c.stride = s.stride;
        c.padding = s.padding;
        const double fan_in = double(cur.channels * s.kernel * s.kernel);
        const double fan_out = double(s.filters * s.kernel * s.kernel);
        std::uniform_real_distribution<float> dist(-float(std::sqrt(6.0 / (fan_in + fan_out))),
                                                   float(std::sqrt(6.0 / (fan_in + fan_out))));
        for (std::size_t f = 0; f < s.filters; ++f) {
          FilterTensor filt(cur.channels, s.kernel, s.kernel);
          if (initialize)
            for (auto& w : filt.weights) w = dist(rng);
          c.filters.push_back(std::move(filt));
        }
        net.layers.emplace_back(std::move(c));
        break;
      }
      case LayerKind::Dense: {
        Dense d(cur.size(), s.filters);
        const double limit = std::sqrt(6.0 / double(d.inputs + d.outputs));
        std::uniform_real_distribution<float> dist(-float(limit), float(limit));
        if (initialize)
          for (auto& w : d.weights) w = dist(rng);
        net.layers.emplace_back(std::move(d));
        break;
      }
      case LayerKind::ReLU: net.layers.emplace_back(ReLU{}); break;
      case LayerKind::MaxPool: net.layers.emplace_back(MaxPool{s.window, s.stride}); break;
      case LayerKind::Flatten: net.layers.emplace_back(Flatten{}); break;
      case LayerKind::Softmax: net.layers.emplace_back(Softmax{}); break;
    }
    cur = layer_output_shape(net.layers.back(), cur);
  }
  return net;
}

}  // namespace rfprune
