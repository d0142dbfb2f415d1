#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace dstrip::nn {

/// Multi-channel 3D activation, channel-major with the last spatial axis
/// contiguous.
template <typename T>
struct FeatureGrid {
  int channels = 0;
  std::array<int, 3> spatial{0, 0, 0};
  std::vector<T> data;

  FeatureGrid() = default;
  FeatureGrid(int c, std::array<int, 3> s, T fill = T(0))
      : channels(c), spatial(s), data(static_cast<std::size_t>(c) * s[0] * s[1] * s[2], fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(spatial[0]) * spatial[1] * spatial[2]; }
  T* channel(int c) { return data.data() + plane() * c; }
  const T* channel(int c) const { return data.data() + plane() * c; }
  T& at(int c, int x, int y, int z) {
    return data[plane() * c + (static_cast<std::size_t>(x) * spatial[1] + y) * spatial[2] + z];
  }
  T at(int c, int x, int y, int z) const {
    return data[plane() * c + (static_cast<std::size_t>(x) * spatial[1] + y) * spatial[2] + z];
  }
  bool same_shape(const FeatureGrid& o) const { return channels == o.channels && spatial == o.spatial; }
};

} // namespace dstrip::nn
