#pragma once

#include <cstdint>
#include <vector>

#include "dstrip/nn/tensor.hpp"

namespace dstrip::nn {

/// x for x > 0, slope * x otherwise (zero takes the slope branch).
template <typename T>
FeatureGrid<T> leaky_relu(const FeatureGrid<T>& x, T slope);

/// Gradient through leaky_relu given its output; valid for slope >= 0 since
/// the output is positive exactly where the input is.
template <typename T>
FeatureGrid<T> leaky_relu_backward(const FeatureGrid<T>& activated, const FeatureGrid<T>& grad, T slope);

template <typename T>
struct PoolResult {
  FeatureGrid<T> output;
  std::vector<std::uint32_t> argmax; // winning input offset per output voxel
};

/// 2x2x2 max pooling; ties go to the lowest linear index. Spatial dims must be even.
template <typename T>
PoolResult<T> maxpool2(const FeatureGrid<T>& x);

/// Routes each output gradient to its argmax input voxel.
template <typename T>
FeatureGrid<T> maxpool2_backward(const PoolResult<T>& pooled, const FeatureGrid<T>& grad, std::array<int, 3> input_spatial);

/// Nearest-neighbor 2x upsampling.
template <typename T>
FeatureGrid<T> upsample2(const FeatureGrid<T>& x);

/// Sums each 2x2x2 block of the gradient back onto its source voxel.
template <typename T>
FeatureGrid<T> upsample2_backward(const FeatureGrid<T>& grad);

/// Channel concatenation [a, b].
template <typename T>
FeatureGrid<T> concat(const FeatureGrid<T>& a, const FeatureGrid<T>& b);

/// Softmax across channels at every voxel.
template <typename T>
FeatureGrid<T> softmax(const FeatureGrid<T>& logits);

/// Gradient with respect to the logits given the softmax output and dL/dp.
template <typename T>
FeatureGrid<T> softmax_backward(const FeatureGrid<T>& probs, const FeatureGrid<T>& grad);

} // namespace dstrip::nn
