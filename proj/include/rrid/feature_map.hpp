#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rrid/tensor.hpp"

namespace rrid {

// H x W x C activation volume for one image, index ((h * W + w) * C + c).
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> values;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), values(h * w * c, fill) {}

  float& at(std::size_t h, std::size_t w, std::size_t c) {
    return values[(h * width + w) * channels + c];
  }
  float at(std::size_t h, std::size_t w, std::size_t c) const {
    return values[(h * width + w) * channels + c];
  }

  bool operator==(const FeatureMap&) const = default;
};

// Packs maps of identical dimensions into an [N x H x W x C] tensor.
Tensor stack_feature_maps(std::span<const FeatureMap> maps);
Tensor stack_feature_maps(std::span<const FeatureMap* const> maps);

}  // namespace rrid
