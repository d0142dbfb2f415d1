#pragma once

#include <span>
#include <vector>

#include "dstrip/nn/tensor.hpp"

namespace dstrip::nn {

/// Number of taps of the 3x3x3 kernel.
inline constexpr int kTaps = 27;

/// 3x3x3 cross-correlation with one voxel of zero padding, so spatial dims are
/// preserved. `kernel` is laid out [c_out][c_in][3][3][3].
template <typename T>
FeatureGrid<T> conv3d_forward(const FeatureGrid<T>& input, std::span<const T> kernel, std::span<const T> bias);

template <typename T>
struct ConvGrads {
  FeatureGrid<T> grad_input;
  std::vector<T> grad_kernel;
  std::vector<T> grad_bias;
};

/// Exact gradients of conv3d_forward. The input gradient is skipped when
/// `need_input_grad` is false (first layer).
template <typename T>
ConvGrads<T> conv3d_backward(const FeatureGrid<T>& input, std::span<const T> kernel, const FeatureGrid<T>& grad_out,
                             bool need_input_grad = true);

} // namespace dstrip::nn
