#pragma once

#include <vector>

#include "sinkdem/tensor.hpp"

namespace sinkdem::siran {

// Normalized spatial map in [0,1], one per sample.
struct AttentionMap {
  int h = 0, w = 0;
  std::vector<float> values;  // row-major h*w

  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }
  void validate() const;
};

// Conversions between per-sample maps and an (N,1,H,W) tensor.
std::vector<AttentionMap> to_maps(const nn::Tensor& t);
nn::Tensor from_maps(const std::vector<AttentionMap>& maps);

}  // namespace sinkdem::siran
