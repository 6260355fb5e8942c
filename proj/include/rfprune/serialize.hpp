#pragma once

// Binary container shared by models and feature maps.
//
//   offset  size  field
//   0       8     magic "RFPRUNE\0"
//   8       4     u32 format version (1)
//   12      4     u32 payload kind (1 = model, 2 = feature map)
//   16      ...   payload
//
// Every integer is an unsigned 32-bit little-endian value; every real is an
// IEEE-754 binary32 written little-endian, so a round trip is bit-exact.
//
// Model payload: u32 C, H, W (input shape), u32 layer count, then per layer a
// u8 kind tag (1 conv, 2 relu, 3 maxpool, 4 flatten, 5 dense, 6 softmax) and:
//   conv    u32 filters, depth, kernel_h, kernel_w, stride; u8 padding (0 valid, 1 same);
//           filters*depth*kh*kw weights (filter-major, then depth, row, col); filters biases
//   maxpool u32 window, stride
//   dense   u32 inputs, outputs; outputs*inputs weights (row-major); outputs biases
// Feature map payload: u32 C, H, W, then C*H*W values, channel-major.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfprune/network.hpp"

namespace rfprune {

class SerializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kMagic[8] = {'R', 'F', 'P', 'R', 'U', 'N', 'E', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;

enum class PayloadKind : std::uint32_t { Model = 1, FeatureMap = 2 };

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(std::uint8_t(v >> (8 * i)));
  }
  void size(std::size_t v) {
    if (v > 0xFFFFFFFFu) throw SerializationError("value does not fit in u32");
    u32(std::uint32_t(v));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> v) {
    for (float x : v) f32(x);
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void f32s(std::vector<float>& out, std::size_t n) {
    need(n * 4);
    out.resize(n);
    for (auto& x : out) x = f32();
  }
  void expect_header(PayloadKind kind) {
    need(8);
    if (std::memcmp(b_.data(), kMagic, 8) != 0) throw SerializationError("bad magic");
    pos_ = 8;
    const auto version = u32();
    if (version != kFormatVersion) throw SerializationError("unsupported format version " + std::to_string(version));
    const auto k = u32();
    if (k != std::uint32_t(kind)) throw SerializationError("unexpected payload kind " + std::to_string(k));
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw SerializationError("truncated input");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline void write_header(ByteWriter& w, PayloadKind kind) {
  w.raw(kMagic, 8);
  w.u32(kFormatVersion);
  w.u32(std::uint32_t(kind));
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw SerializationError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!os) throw SerializationError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SerializationError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const NetworkGraph& model) {
  detail::ByteWriter w;
  detail::write_header(w, PayloadKind::Model);
  w.size(model.input_shape.channels);
  w.size(model.input_shape.height);
  w.size(model.input_shape.width);
  w.size(model.layers.size());
  for (const auto& layer : model.layers) {
    w.u8(std::uint8_t(kind_of(layer)));
    if (const auto* c = std::get_if<Conv>(&layer)) {
      w.size(c->filters.size());
      w.size(c->depth());
      w.size(c->kernel_h());
      w.size(c->kernel_w());
      w.size(c->stride);
      w.u8(std::uint8_t(c->padding));
      for (const auto& f : c->filters) w.f32s(f.weights);
      for (const auto& f : c->filters) w.f32(f.bias);
    } else if (const auto* p = std::get_if<MaxPool>(&layer)) {
      w.size(p->window);
      w.size(p->stride);
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      w.size(d->inputs);
      w.size(d->outputs);
      w.f32s(d->weights);
      w.f32s(d->bias);
    }
  }
  return w.take();
}

inline NetworkGraph deserialize_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_header(PayloadKind::Model);
  NetworkGraph net;
  net.input_shape.channels = r.u32();
  net.input_shape.height = r.u32();
  net.input_shape.width = r.u32();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto kind = static_cast<LayerKind>(r.u8());
    switch (kind) {
      case LayerKind::Conv: {
        Conv c;
        const std::size_t filters = r.u32(), depth = r.u32(), kh = r.u32(), kw = r.u32();
        c.stride = r.u32();
        const auto pad = r.u8();
        if (pad > 1) throw SerializationError("bad padding tag");
        c.padding = static_cast<Padding>(pad);
        c.filters.assign(filters, FilterTensor(depth, kh, kw));
        for (auto& f : c.filters) r.f32s(f.weights, depth * kh * kw);
        for (auto& f : c.filters) f.bias = r.f32();
        net.layers.emplace_back(std::move(c));
        break;
      }
      case LayerKind::ReLU: net.layers.emplace_back(ReLU{}); break;
      case LayerKind::MaxPool: {
        MaxPool p;
        p.window = r.u32();
        p.stride = r.u32();
        net.layers.emplace_back(p);
        break;
      }
      case LayerKind::Flatten: net.layers.emplace_back(Flatten{}); break;
      case LayerKind::Dense: {
        Dense d;
        d.inputs = r.u32();
        d.outputs = r.u32();
        r.f32s(d.weights, d.inputs * d.outputs);
        r.f32s(d.bias, d.outputs);
        net.layers.emplace_back(std::move(d));
        break;
      }
      case LayerKind::Softmax: net.layers.emplace_back(Softmax{}); break;
      default: throw SerializationError("unknown layer tag " + std::to_string(int(kind)));
    }
  }
  if (!r.done()) throw SerializationError("trailing bytes after model payload");
  try {
    net.validate();
  } catch (const ShapeError& e) {
    throw SerializationError(std::string("model payload is not shape-consistent: ") + e.what());
  }
  return net;
}

inline std::vector<std::uint8_t> serialize(const FeatureMap& map) {
  detail::ByteWriter w;
  detail::write_header(w, PayloadKind::FeatureMap);
  w.size(map.channels);
  w.size(map.height);
  w.size(map.width);
  w.f32s(map.data);
  return w.take();
}

inline FeatureMap deserialize_feature_map(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_header(PayloadKind::FeatureMap);
  FeatureMap m;
  m.channels = r.u32();
  m.height = r.u32();
  m.width = r.u32();
  r.f32s(m.data, m.channels * m.height * m.width);
  if (!r.done()) throw SerializationError("trailing bytes after feature map payload");
  return m;
}

inline void save_model(const NetworkGraph& model, const std::filesystem::path& path) {
  detail::write_file(path, serialize(model));
}
inline NetworkGraph load_model(const std::filesystem::path& path) {
  return deserialize_model(detail::read_file(path));
}
inline void save_feature_map(const FeatureMap& map, const std::filesystem::path& path) {
  detail::write_file(path, serialize(map));
}
inline FeatureMap load_feature_map(const std::filesystem::path& path) {
  return deserialize_feature_map(detail::read_file(path));
}

/// FNV-1a over the serialized model; identifies a model state in traces.
inline std::uint64_t fingerprint(const NetworkGraph& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : serialize(model)) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace rfprune
