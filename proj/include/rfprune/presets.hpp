#pragma once

#include <string>
#include <vector>

#include "rfprune/network.hpp"

namespace rfprune {

inline constexpr Shape kTFMapShape{3, 128, 128};

/// Desk-scale VGG-style stack for 3x128x128 maps:
///   conv40/s2 -> pool -> conv40 -> pool -> conv40 -> pool -> conv80 -> global pool -> dense.
/// Every conv width is a multiple of 20 so floor(p% * n) is exact for
/// p in {5, 15, 30, 50, 70, 95}, and the three interior convs have depth 40.
inline std::vector<LayerSpec> desk_vgg_specs(std::size_t classes = 6) {
  return {
      LayerSpec::conv(40, 3, 2), LayerSpec::relu(), LayerSpec::maxpool(2, 2),  // 64 -> 32
      LayerSpec::conv(40, 3, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),  // 32 -> 16
      LayerSpec::conv(40, 3, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),  // 16 -> 8
      LayerSpec::conv(80, 3, 1), LayerSpec::relu(), LayerSpec::maxpool(8, 8),  // 8 -> 1
      LayerSpec::flatten(),      LayerSpec::dense(classes), LayerSpec::softmax(),
  };
}

/// Full VGG16 on 3x128x128 input: 13 'same' 3x3 convs in five blocks with
/// 2x2 pooling, then 4096-4096-classes dense head (512*4*4 flattened inputs).
/// Provided for accounting; too large for desk-scale training.
inline std::vector<LayerSpec> vgg16_specs(std::size_t classes = 6) {
  std::vector<LayerSpec> s;
  const std::vector<std::vector<std::size_t>> blocks = {{64, 64}, {128, 128}, {256, 256, 256},
                                                        {512, 512, 512}, {512, 512, 512}};
  for (const auto& block : blocks) {
    for (std::size_t n : block) {
      s.push_back(LayerSpec::conv(n));
      s.push_back(LayerSpec::relu());
    }
    s.push_back(LayerSpec::maxpool(2, 2));
  }
  s.push_back(LayerSpec::flatten());
  s.push_back(LayerSpec::dense(4096));
  s.push_back(LayerSpec::relu());
  s.push_back(LayerSpec::dense(4096));
  s.push_back(LayerSpec::relu());
  s.push_back(LayerSpec::dense(classes));
  s.push_back(LayerSpec::softmax());
  return s;
}

/// VGG16 convolutional body with a single dense classifier on the flattened
/// 512x4x4 maps (about 14.8M parameters).
inline std::vector<LayerSpec> vgg16_compact_specs(std::size_t classes = 6) {
  auto s = vgg16_specs(classes);
  while (s.back().kind != LayerKind::Flatten) s.pop_back();
  s.push_back(LayerSpec::dense(classes));
  s.push_back(LayerSpec::softmax());
  return s;
}

inline std::vector<LayerSpec> preset_specs(const std::string& name, std::size_t classes = 6) {
  if (name == "desk-vgg") return desk_vgg_specs(classes);
  if (name == "vgg16") return vgg16_specs(classes);
  if (name == "vgg16-compact") return vgg16_compact_specs(classes);
  throw std::invalid_argument("unknown architecture preset '" + name + "'");
}

}  // namespace rfprune
