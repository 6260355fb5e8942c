#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfprune {

/// Raised when layer and tensor dimensions do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  std::size_t spatial() const { return height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << channels << "x" << height << "x" << width;
    return os.str();
  }
};

/// Dense channel-major activation tensor.
template <typename T>
struct BasicFeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> data;

  BasicFeatureMap() = default;
  BasicFeatureMap(std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : channels(c), height(h), width(w), data(c * h * w, fill) {}
  explicit BasicFeatureMap(const Shape& s, T fill = T(0))
      : BasicFeatureMap(s.channels, s.height, s.width, fill) {}
  BasicFeatureMap(const Shape& s, std::vector<T> values)
      : channels(s.channels), height(s.height), width(s.width), data(std::move(values)) {
    if (data.size() != s.size())
      throw ShapeError("feature map data length " + std::to_string(data.size()) +
                       " does not match shape " + s.str());
  }

  Shape shape() const { return {channels, height, width}; }
  std::size_t size() const { return data.size(); }

  T& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }

  std::span<T> channel(std::size_t c) {
    return std::span<T>(data).subspan(c * height * width, height * width);
  }
  std::span<const T> channel(std::size_t c) const {
    return std::span<const T>(data).subspan(c * height * width, height * width);
  }

  template <typename U>
  BasicFeatureMap<U> cast() const {
    BasicFeatureMap<U> out(channels, height, width);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  friend bool operator==(const BasicFeatureMap&, const BasicFeatureMap&) = default;
};

/// One full-depth convolution kernel plus its bias: the unit of structured pruning.
/// Weights are stored depth-major, then row, then column.
template <typename T>
struct BasicFilter {
  std::size_t depth = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::vector<T> weights;
  T bias = T(0);

  BasicFilter() = default;
  BasicFilter(std::size_t d, std::size_t kh, std::size_t kw, T fill = T(0))
      : depth(d), kernel_h(kh), kernel_w(kw), weights(d * kh * kw, fill) {}

  std::size_t volume() const { return depth * kernel_h * kernel_w; }

  T& at(std::size_t c, std::size_t y, std::size_t x) {
    return weights[(c * kernel_h + y) * kernel_w + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return weights[(c * kernel_h + y) * kernel_w + x];
  }

  template <typename U>
  BasicFilter<U> cast() const {
    BasicFilter<U> out(depth, kernel_h, kernel_w);
    for (std::size_t i = 0; i < weights.size(); ++i) out.weights[i] = static_cast<U>(weights[i]);
    out.bias = static_cast<U>(bias);
    return out;
  }

  friend bool operator==(const BasicFilter&, const BasicFilter&) = default;
};

using FeatureMap = BasicFeatureMap<float>;
using FilterTensor = BasicFilter<float>;

}  // namespace rfprune
